#include "dfseg/translator.hpp"

#include "dfseg/errors.hpp"

#include <cmath>

namespace dfseg::translator {
namespace {

double softplus(double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); }

// Mean BCE of logits against a constant label.
double bce(const Eigen::ArrayXd& logits, double label) {
  return (logits.unaryExpr(&softplus) - label * logits).mean();
}

}  // namespace

double adversarial_loss(const Eigen::ArrayXd& d_real, const Eigen::ArrayXd& d_fake, LossSide side,
                        AdversarialVariant variant) {
  if (variant == AdversarialVariant::least_squares) {
    if (side == LossSide::generator) return (d_fake - 1.0).square().mean();
    return (d_real - 1.0).square().mean() + d_fake.square().mean();
  }
  if (side == LossSide::generator) return bce(d_fake, 1.0);
  return bce(d_real, 1.0) + bce(d_fake, 0.0);
}

double cycle_consistency_loss(const Image& x, const Image& x_rec, const Image& y,
                              const Image& y_rec) {
  auto same = [](const Image& a, const Image& b) {
    return a.rows() == b.rows() && a.cols() == b.cols();
  };
  if (!same(x, x_rec) || !same(y, y_rec)) {
    throw ValidationError("cycle_consistency_loss: reconstruction shape differs from input");
  }
  if (x.size() == 0 || y.size() == 0) throw ValidationError("cycle_consistency_loss: empty image");
  return (x_rec.cast<double>() - x.cast<double>()).abs().mean() +
         (y_rec.cast<double>() - y.cast<double>()).abs().mean();
}

template <typename Scalar>
nn::Var<Scalar> adversarial_term(const nn::Var<Scalar>& predictions, bool toward_real,
                                 AdversarialVariant variant) {
  const Scalar label = toward_real ? Scalar(1) : Scalar(0);
  if (variant == AdversarialVariant::least_squares) return nn::mean_squared_to(predictions, label);
  return nn::bce_with_logits_to(predictions, label);
}

template <typename Scalar>
GeneratorObjective<Scalar> generator_objective(const CycleGANBundle<Scalar>& bundle,
                                               const nn::Var<Scalar>& real_a,
                                               const nn::Var<Scalar>& real_b) {
  const auto variant = bundle.config.adversarial_variant;
  GeneratorObjective<Scalar> o;
  o.fake_b = bundle.G.forward(real_a);
  o.fake_a = bundle.F.forward(real_b);
  const auto rec_a = bundle.F.forward(o.fake_b);
  const auto rec_b = bundle.G.forward(o.fake_a);
  o.adv_G = adversarial_term(bundle.D_B.forward(o.fake_b), true, variant);
  o.adv_F = adversarial_term(bundle.D_A.forward(o.fake_a), true, variant);
  o.cyc = nn::add(nn::mean_abs_diff(rec_a, real_a), nn::mean_abs_diff(rec_b, real_b));
  o.total = nn::add(nn::add(o.adv_G, o.adv_F), nn::scale(o.cyc, Scalar(bundle.config.lambda_cyc)));
  if (bundle.config.lambda_identity > 0.0) {
    const auto idt = nn::add(nn::mean_abs_diff(bundle.G.forward(real_b), real_b),
                             nn::mean_abs_diff(bundle.F.forward(real_a), real_a));
    o.total = nn::add(o.total, nn::scale(idt, Scalar(bundle.config.lambda_identity *
                                                     bundle.config.lambda_cyc)));
  }
  return o;
}

template nn::Var<float> adversarial_term(const nn::Var<float>&, bool, AdversarialVariant);
template nn::Var<double> adversarial_term(const nn::Var<double>&, bool, AdversarialVariant);
template GeneratorObjective<float> generator_objective(const CycleGANBundle<float>&,
                                                       const nn::Var<float>&, const nn::Var<float>&);
template GeneratorObjective<double> generator_objective(const CycleGANBundle<double>&,
                                                        const nn::Var<double>&,
                                                        const nn::Var<double>&);

}  // namespace dfseg::translator
