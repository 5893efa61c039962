#include "dfseg/evalkit.hpp"

#include "dfseg/errors.hpp"

namespace dfseg::evalkit {
namespace {

void check_shapes(const Mask& a, const Mask& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": mask shapes differ (" + std::to_string(a.rows()) +
                          "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                          "x" + std::to_string(b.cols()) + ")");
  }
}

struct Counts {
  Index a = 0, b = 0, both = 0;
};

Counts count(const Mask& a, const Mask& b) {
  Counts c;
  const auto fa = (a != 0);
  const auto fb = (b != 0);
  c.a = fa.count();
  c.b = fb.count();
  c.both = (fa && fb).count();
  return c;
}

}  // namespace

double dsc(const Mask& a, const Mask& b) {
  check_shapes(a, b, "dsc");
  const Counts c = count(a, b);
  if (c.a + c.b == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.a + c.b);
}

double jsc(const Mask& a, const Mask& b) {
  check_shapes(a, b, "jsc");
  const Counts c = count(a, b);
  const Index uni = c.a + c.b - c.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.both) / static_cast<double>(uni);
}

std::string to_string(Degenerate d) {
  switch (d) {
    case Degenerate::none: return "none";
    case Degenerate::both_empty: return "both_empty";
    case Degenerate::one_empty: return "one_empty";
  }
  return "none";
}

Degenerate parse_degenerate(const std::string& s) {
  if (s == "none") return Degenerate::none;
  if (s == "both_empty") return Degenerate::both_empty;
  if (s == "one_empty") return Degenerate::one_empty;
  throw ValidationError("unknown degenerate flag '" + s + "'");
}

MetricRecord evaluate_pair(const std::string& id, const Mask& gt, const Mask& pred) {
  MetricRecord r;
  r.sample_id = id;
  r.dsc = dsc(gt, pred);
  r.jsc = jsc(gt, pred);
  const SurfaceDistance m = mad(gt, pred);
  const SurfaceDistance h = hausdorff(gt, pred);
  r.mad_px = m.px;
  r.mad_norm = m.norm;
  r.hd_px = h.px;
  r.hd_norm = h.norm;
  r.flag = h.flag;
  return r;
}

}  // namespace dfseg::evalkit
