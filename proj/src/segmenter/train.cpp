#include "dfseg/segmenter.hpp"

#include "dfseg/errors.hpp"
#include "dfseg/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace dfseg::segmenter {

namespace fs = std::filesystem;
using nn::Shape;
using nn::Tensor;
using nn::Var;

double dice_loss(const Image& pred, const Mask& target, double epsilon) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ValidationError("dice_loss: shapes differ");
  }
  const auto p = pred.cast<double>();
  const auto g = (target > 0).cast<double>();
  return 1.0 - (2.0 * (p * g).sum() + epsilon) / (p.sum() + g.sum() + epsilon);
}

ImageT<double> dice_loss_gradient(const ImageT<double>& pred, const Mask& target, double epsilon) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ValidationError("dice_loss_gradient: shapes differ");
  }
  const ImageT<double> g = (target > 0).cast<double>();
  const double num = 2.0 * (pred * g).sum() + epsilon;
  const double den = pred.sum() + g.sum() + epsilon;
  return (num - 2.0 * g * den) / (den * den);
}

namespace {

Tensor<float> images_to_batch(const std::vector<const Image*>& images) {
  const Index h = images.front()->rows(), w = images.front()->cols();
  Tensor<float> t(Shape{static_cast<Index>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    t.data.segment(static_cast<Index>(i) * h * w, h * w) =
        Eigen::Map<const Eigen::ArrayXf>(images[i]->data(), h * w);
  }
  return t;
}

Tensor<float> masks_to_batch(const std::vector<const Mask*>& masks, Index h, Index w) {
  Tensor<float> t(Shape{static_cast<Index>(masks.size()), 1, h, w});
  t.data.setZero();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i]->size() == 0) continue;  // healthy: all-zero target
    t.data.segment(static_cast<Index>(i) * h * w, h * w) =
        (Eigen::Map<const Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>>(masks[i]->data(), h * w) > 0)
            .cast<float>();
  }
  return t;
}

void check_slices(const std::vector<datakit::SliceData>& set, Index size, const char* which) {
  for (const auto& s : set) {
    if (s.image.rows() != size || s.image.cols() != size) {
      throw ValidationError(std::string("train_segmenter: ") + which + " sample " + s.id + " is " +
                            std::to_string(s.image.rows()) + "x" + std::to_string(s.image.cols()) +
                            ", expected " + std::to_string(size));
    }
    if (s.has_mask() && (s.mask.rows() != size || s.mask.cols() != size)) {
      throw ValidationError(std::string("train_segmenter: ") + which + " mask of " + s.id +
                            " does not match its image");
    }
  }
}

Image to_image(const Tensor<float>& t, Index i) {
  const Index h = t.shape.h, w = t.shape.w;
  Image out(h, w);
  Eigen::Map<Eigen::ArrayXf>(out.data(), h * w) = t.data.segment(i * h * w, h * w);
  return out;
}

// Mean per-sample loss and DSC over `val` in inference mode.
std::pair<double, double> validate(const SegModelBundle& b, const std::vector<datakit::SliceData>& val,
                                   double eps, std::size_t chunk) {
  double loss = 0.0, score = 0.0;
  const Index size = b.config.input_size;
  for (std::size_t start = 0; start < val.size(); start += chunk) {
    const std::size_t end = std::min(val.size(), start + chunk);
    std::vector<const Image*> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(&val[i].image);
    const auto prob = b.net.infer(Var<float>(images_to_batch(images))).value();
    for (std::size_t i = start; i < end; ++i) {
      const Image p = to_image(prob, static_cast<Index>(i - start));
      const Mask gt = val[i].has_mask() ? val[i].mask : Mask(Mask::Zero(size, size));
      loss += dice_loss(p, gt, eps);
      const Mask pred = (p >= static_cast<float>(b.config.out_threshold)).cast<std::uint8_t>();
      score += evalkit::dsc(gt, pred);
    }
  }
  const double n = static_cast<double>(val.size());
  return {loss / n, score / n};
}

}  // namespace

Image predict_probabilities(const SegModelBundle& bundle, const Image& image) {
  const Index size = bundle.config.input_size;
  if (image.rows() != size || image.cols() != size) {
    throw ValidationError("predict: expected a " + std::to_string(size) + "x" + std::to_string(size) +
                          " slice, got " + std::to_string(image.rows()) + "x" +
                          std::to_string(image.cols()));
  }
  return to_image(bundle.net.infer(Var<float>(images_to_batch({&image}))).value(), 0);
}

Mask predict_mask(const SegModelBundle& bundle, const Image& image, double threshold) {
  const Image p = predict_probabilities(bundle, image);
  return (p.cast<double>() >= threshold).cast<std::uint8_t>();
}

SegTraining train_segmenter(SegModelBundle bundle, const std::vector<datakit::SliceData>& train_set,
                            const std::vector<datakit::SliceData>& val_set, const TrainConfig& tc) {
  tc.validate();
  if (train_set.empty()) throw ValidationError("train_segmenter: training set is empty");
  const Index size = bundle.config.input_size;
  check_slices(train_set, size, "train");
  check_slices(val_set, size, "val");

  SegTraining result;
  if (tc.epochs == 0) {
    result.history = bundle.history;
    result.bundle = std::move(bundle);
    return result;
  }

  typename nn::Adam<float>::Options opt;
  opt.lr = static_cast<float>(tc.lr);
  nn::Adam<float> adam(bundle.net.parameters().trainable(), opt);
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(train_set.size());
  const auto batch = static_cast<std::size_t>(tc.batch);
  const int first_epoch = static_cast<int>(bundle.history.size()) + 1;

  for (int epoch = first_epoch; epoch < first_epoch + tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<const Image*> images;
      std::vector<const Mask*> masks;
      for (std::size_t i = start; i < end; ++i) {
        images.push_back(&train_set[order[i]].image);
        masks.push_back(&train_set[order[i]].mask);
      }
      const Var<float> x(images_to_batch(images));
      const auto pred = bundle.net.forward(x, true);
      const auto loss = nn::dice_loss(pred, masks_to_batch(masks, size, size),
                                      static_cast<float>(tc.dice_epsilon));
      loss.backward();
      adam.step();
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(end - start);
    }
    EpochRecord rec;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(rec.train_loss)) {
      throw TrainingDiverged("segmenter training diverged at epoch " + std::to_string(epoch) +
                             ": non-finite loss");
    }
    if (!val_set.empty()) {
      std::tie(rec.val_loss, rec.val_dsc) = validate(bundle, val_set, tc.dice_epsilon, batch);
      if (!std::isfinite(rec.val_loss)) {
        throw TrainingDiverged("segmenter training diverged at epoch " + std::to_string(epoch) +
                               ": non-finite validation loss");
      }
      if (!bundle.best_state || rec.val_dsc > bundle.best_val_dsc) {
        bundle.best_state = bundle.net.parameters().state();
        bundle.best_epoch = epoch;
        bundle.best_val_dsc = rec.val_dsc;
      }
    }
    bundle.history.push_back(rec);
    result.history.push_back(rec);
  }
  result.bundle = std::move(bundle);
  return result;
}

namespace {

nlohmann::json history_json(const std::vector<EpochRecord>& history) {
  auto arr = nlohmann::json::array();
  for (const auto& e : history) {
    arr.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_dsc", e.val_dsc}});
  }
  return arr;
}

}  // namespace

fs::path save_segmenter(const SegModelBundle& bundle, const fs::path& stem, std::uint64_t seed) {
  nlohmann::json side = {{"kind", "unet"},
                         {"config", bundle.config},
                         {"seed", seed},
                         {"trained_epochs", bundle.history.size()},
                         {"history", history_json(bundle.history)},
                         {"best_epoch", bundle.best_epoch},
                         {"best_val_dsc", bundle.best_val_dsc}};
  const auto path = nn::save_checkpoint(stem, bundle.net.parameters().state(), side);
  if (bundle.best_state) {
    auto best_side = side;
    best_side["trained_epochs"] = bundle.best_epoch;
    best_side["selected_by"] = "val_dsc";
    nn::save_checkpoint(fs::path(stem.string() + "_best"), *bundle.best_state, best_side);
  }
  return path;
}

SegModelBundle load_segmenter(const fs::path& path) {
  const auto ck = nn::load_checkpoint<float>(path);
  if (ck.sidecar.value("kind", std::string()) != "unet") {
    throw CheckpointIncompatible("checkpoint " + path.string() + " is not a unet checkpoint");
  }
  UNetConfig config = ck.sidecar.at("config").get<UNetConfig>();
  config.pretrained_encoder.reset();
  config.freeze_encoder = false;
  SegModelBundle b = build_unet(config);
  b.net.parameters().load_state(ck.tensors);
  for (const auto& e : ck.sidecar.value("history", nlohmann::json::array())) {
    b.history.push_back({e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                         e.at("val_dsc").get<double>()});
  }
  b.best_epoch = ck.sidecar.value("best_epoch", 0);
  b.best_val_dsc = ck.sidecar.value("best_val_dsc", 0.0);
  return b;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write " + path.string());
  out.precision(17);
  out << "epoch,train_loss,val_loss,val_dsc\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    out << i + 1 << ',' << history[i].train_loss << ',' << history[i].val_loss << ','
        << history[i].val_dsc << '\n';
  }
}

}  // namespace dfseg::segmenter
