#include "dfseg/translator.hpp"

#include "dfseg/errors.hpp"

#include <fstream>

namespace dfseg::translator {

namespace fs = std::filesystem;

DeepfakeResult generate_deepfake_set(const CycleGANBundle<float>& bundle,
                                     const datakit::DatasetManifest& source,
                                     const fs::path& out_dir, const DeepfakeOptions& options) {
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  const Index size = bundle.config.image_size;
  const datakit::PreprocessOptions prep{size, true};

  DeepfakeResult result;
  std::ofstream csv(out_dir / "fidelity.csv", std::ios::trunc);
  if (!csv) throw LoadError("cannot write " + (out_dir / "fidelity.csv").string());
  csv.precision(17);
  csv << "id,mse,ssim\n";

  for (const auto& s : source.samples) {
    if (options.max_count && result.manifest.samples.size() >= *options.max_count) break;
    try {
      const datakit::SliceData src = datakit::load_slice(s, prep);
      const Image fake = translate(bundle, src.image, options.direction);
      const datakit::Fidelity fid = fidelity_metrics(src.image, fake);
      if (options.fidelity_floor && fid.ssim < *options.fidelity_floor) {
        ++result.dropped_by_floor;
        continue;
      }
      datakit::SliceSample out;
      out.id = options.id_prefix + s.id;
      out.image_path = fs::absolute(out_dir / "images" / (out.id + ".png")).lexically_normal();
      write_png(out.image_path, fake, 16);
      if (src.has_mask()) {
        out.mask_path = fs::absolute(out_dir / "masks" / (out.id + ".png")).lexically_normal();
        write_mask_png(*out.mask_path, src.mask);
      }
      out.domain = datakit::Domain::FAKE;
      out.source = "deepfake";
      out.split = datakit::Split::train;
      out.derived_from = s.id + " " + to_string(options.direction) + " (mask inherited)";
      out.fidelity = fid;
      csv << out.id << ',' << fid.mse << ',' << fid.ssim << '\n';
      result.manifest.samples.push_back(std::move(out));
    } catch (const std::exception& e) {
      result.failures.emplace_back(s.id, e.what());
    }
  }
  datakit::save_manifest(result.manifest, out_dir / "manifest.json");
  return result;
}

}  // namespace dfseg::translator
