#include "dfseg/datakit.hpp"

#include "dfseg/errors.hpp"

#include <fstream>
#include <set>

namespace dfseg::datakit {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Domain d) {
  switch (d) {
    case Domain::MR: return "MR";
    case Domain::CT: return "CT";
    case Domain::FAKE: return "FAKE";
  }
  return "MR";
}

std::string to_string(Split s) { return s == Split::train ? "train" : "val"; }

Domain parse_domain(const std::string& s) {
  if (s == "MR") return Domain::MR;
  if (s == "CT") return Domain::CT;
  if (s == "FAKE") return Domain::FAKE;
  throw ValidationError("unknown domain '" + s + "' (expected MR, CT or FAKE)");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  throw ValidationError("unknown split '" + s + "' (expected train or val)");
}

std::map<std::string, std::size_t> DatasetManifest::counts() const {
  std::map<std::string, std::size_t> out;
  for (const auto& s : samples) ++out[s.source];
  return out;
}

std::vector<const SliceSample*> DatasetManifest::with_split(Split s) const {
  std::vector<const SliceSample*> out;
  for (const auto& x : samples) {
    if (x.split == s) out.push_back(&x);
  }
  return out;
}

std::vector<const SliceSample*> DatasetManifest::with_domain(Domain d) const {
  std::vector<const SliceSample*> out;
  for (const auto& x : samples) {
    if (x.domain == d) out.push_back(&x);
  }
  return out;
}

void validate_unique_ids(const DatasetManifest& manifest) {
  std::set<std::string> seen;
  for (const auto& s : manifest.samples) {
    if (!seen.insert(s.id).second) throw ValidationError("duplicate sample id '" + s.id + "'");
  }
}

namespace {

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + "." + key + ": missing");
  return obj.at(key);
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) throw ValidationError(where + "." + key + ": expected string");
  return v.get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal();
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ValidationError("manifest: expected a JSON object");
  DatasetManifest m;
  const json& version = field(doc, "version", "manifest");
  if (!version.is_number_integer()) throw ValidationError("manifest.version: expected integer");
  m.version = version.get<int>();
  if (m.version != DatasetManifest::kVersion) {
    throw ValidationError("manifest.version: unsupported version " + std::to_string(m.version));
  }
  const json& samples = field(doc, "samples", "manifest");
  if (!samples.is_array()) throw ValidationError("manifest.samples: expected array");

  const fs::path base = fs::absolute(path).parent_path();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string where = "manifest.samples[" + std::to_string(i) + "]";
    const json& e = samples[i];
    if (!e.is_object()) throw ValidationError(where + ": expected object");
    SliceSample s;
    s.id = string_field(e, "id", where);
    if (s.id.empty()) throw ValidationError(where + ".id: empty");
    s.image_path = resolve(base, string_field(e, "image_path", where));
    if (e.contains("mask_path") && !e["mask_path"].is_null()) {
      s.mask_path = resolve(base, string_field(e, "mask_path", where));
    }
    try {
      s.domain = parse_domain(string_field(e, "domain", where));
      if (e.contains("split") && !e["split"].is_null()) {
        s.split = parse_split(string_field(e, "split", where));
      }
    } catch (const ValidationError& err) {
      throw ValidationError(where + ": " + err.what());
    }
    s.source = string_field(e, "source", where);
    if (e.contains("derived_from") && e["derived_from"].is_string()) {
      s.derived_from = e["derived_from"].get<std::string>();
    }
    if (e.contains("fidelity") && e["fidelity"].is_object()) {
      s.fidelity = Fidelity{e["fidelity"].value("mse", 0.0), e["fidelity"].value("ssim", 0.0)};
    }
    if (!fs::exists(s.image_path)) throw LoadError("image file not found: " + s.image_path.string());
    if (s.mask_path && !fs::exists(*s.mask_path)) {
      throw LoadError("mask file not found: " + s.mask_path->string());
    }
    m.samples.push_back(std::move(s));
  }
  validate_unique_ids(m);

  if (doc.contains("counts") && doc["counts"].is_object()) {
    const auto tally = m.counts();
    for (const auto& [source, n] : doc["counts"].items()) {
      const auto it = tally.find(source);
      const std::size_t actual = it == tally.end() ? 0 : it->second;
      if (!n.is_number_unsigned() || n.get<std::size_t>() != actual) {
        throw ValidationError("manifest.counts." + source + ": does not match sample tally (" +
                              std::to_string(actual) + ")");
      }
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  validate_unique_ids(manifest);
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  if (!base.empty()) fs::create_directories(base);
  auto rel = [&](const fs::path& p) {
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path r = abs.lexically_relative(base);
    return (r.empty() ? abs : r).generic_string();
  };
  json doc;
  doc["version"] = manifest.version;
  json samples = json::array();
  for (const auto& s : manifest.samples) {
    json e;
    e["id"] = s.id;
    e["image_path"] = rel(s.image_path);
    e["mask_path"] = s.mask_path ? json(rel(*s.mask_path)) : json(nullptr);
    e["domain"] = to_string(s.domain);
    e["source"] = s.source;
    e["split"] = s.split ? json(to_string(*s.split)) : json(nullptr);
    if (s.derived_from) e["derived_from"] = *s.derived_from;
    if (s.fidelity) e["fidelity"] = {{"mse", s.fidelity->mse}, {"ssim", s.fidelity->ssim}};
    samples.push_back(std::move(e));
  }
  doc["samples"] = std::move(samples);
  json counts = json::object();
  for (const auto& [source, n] : manifest.counts()) counts[source] = n;
  doc["counts"] = std::move(counts);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write manifest: " + path.string());
  out << doc.dump(2) << "\n";
}

DatasetManifest merge_with_deepfakes(const DatasetManifest& real, const DatasetManifest& fake) {
  DatasetManifest merged = real;
  std::set<std::string> ids;
  for (const auto& s : real.samples) ids.insert(s.id);
  for (auto s : fake.samples) {
    if (!ids.insert(s.id).second) {
      throw ValidationError("deepfake id '" + s.id + "' collides with an existing sample");
    }
    s.domain = Domain::FAKE;
    s.split = Split::train;
    merged.samples.push_back(std::move(s));
  }
  return merged;
}

}  // namespace dfseg::datakit
