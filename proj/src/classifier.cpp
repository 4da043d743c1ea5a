#include "wlforge/random.hpp"
#include "wlforge/segmenter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace wlforge {
namespace {

struct WindowStats {
  double mean = 0.0;
  double stddev = 0.0;
};

WindowStats window_stats(const GrayImage& img, int row, int col, int half) {
  const int r0 = std::max(0, row - half), r1 = std::min(img.height() - 1, row + half);
  const int c0 = std::max(0, col - half), c1 = std::min(img.width() - 1, col + half);
  const auto block = img.values().block(r0, c0, r1 - r0 + 1, c1 - c0 + 1);
  const double mean = block.mean();
  const double var = (block - mean).square().mean();
  return {mean, std::sqrt(std::max(0.0, var))};
}

double position_feature(int index, int extent) {
  return std::abs(index - extent / 2.0) / static_cast<double>(extent);
}

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::uint64_t content_key(const LabeledImage& item) {
  const auto& v = item.image.values();
  const auto& m = item.mask.bits();
  std::uint64_t h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), sizeof(double) * v.size()));
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(m.data()), sizeof(bool) * m.size()), h);
}

}  // namespace

std::array<double, kFeatureCount> pixel_features(const GrayImage& img, int row, int col) {
  if (!img.dims().contains(row, col)) throw std::out_of_range("pixel_features: pixel out of bounds");
  return {img(row, col),
          window_stats(img, row, col, 1).mean,
          window_stats(img, row, col, 2).stddev,
          position_feature(row, img.height()),
          position_feature(col, img.width()),
          1.0};
}

FeatureMatrix feature_matrix(const GrayImage& img) {
  const int h = img.height();
  const int w = img.width();
  // Summed-area tables of values and squared values.
  Plane<double> sum = Plane<double>::Zero(h + 1, w + 1);
  Plane<double> sq = Plane<double>::Zero(h + 1, w + 1);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double v = img(r, c);
      sum(r + 1, c + 1) = v + sum(r, c + 1) + sum(r + 1, c) - sum(r, c);
      sq(r + 1, c + 1) = v * v + sq(r, c + 1) + sq(r + 1, c) - sq(r, c);
    }
  }
  const auto box = [&](const Plane<double>& t, int r0, int c0, int r1, int c1) {
    return t(r1 + 1, c1 + 1) - t(r0, c1 + 1) - t(r1 + 1, c0) + t(r0, c0);
  };

  FeatureMatrix out(static_cast<Eigen::Index>(h) * w, kFeatureCount);
  for (int r = 0; r < h; ++r) {
    const double fr = position_feature(r, h);
    for (int c = 0; c < w; ++c) {
      const Eigen::Index i = static_cast<Eigen::Index>(r) * w + c;
      int r0 = std::max(0, r - 1), r1 = std::min(h - 1, r + 1);
      int c0 = std::max(0, c - 1), c1 = std::min(w - 1, c + 1);
      const double mean3 = box(sum, r0, c0, r1, c1) / ((r1 - r0 + 1) * (c1 - c0 + 1));

      r0 = std::max(0, r - 2), r1 = std::min(h - 1, r + 2);
      c0 = std::max(0, c - 2), c1 = std::min(w - 1, c + 2);
      const double n5 = (r1 - r0 + 1) * (c1 - c0 + 1);
      const double mean5 = box(sum, r0, c0, r1, c1) / n5;
      const double var5 = box(sq, r0, c0, r1, c1) / n5 - mean5 * mean5;

      out(i, 0) = img(r, c);
      out(i, 1) = mean3;
      out(i, 2) = std::sqrt(std::max(0.0, var5));
      out(i, 3) = fr;
      out(i, 4) = position_feature(c, w);
      out(i, 5) = 1.0;
    }
  }
  return out;
}

void PixelClassifier::validate() const {
  if (!weights.allFinite() || !std::isfinite(bias) || !feature_means.allFinite() || !feature_stds.allFinite())
    throw std::invalid_argument("classifier parameters must be finite");
  if ((feature_stds.array() <= 0.0).any()) throw std::invalid_argument("classifier feature stds must be > 0");
}

PixelClassifier fit_classifier(std::span<const LabeledImage> gold, const TrainerConfig& trainer, std::uint64_t seed,
                               std::vector<double>* loss_log) {
  if (gold.empty()) throw std::invalid_argument("fit_classifier: gold set is empty");
  if (trainer.epochs < 0 || !(trainer.learn_rate > 0.0)) throw std::invalid_argument("fit_classifier: bad trainer");

  std::size_t n_fg = 0, n_bg = 0;
  for (const auto& item : gold) {
    if (item.image.dims() != item.mask.dims()) throw std::invalid_argument("fit_classifier: mask/image dims differ");
    n_fg += item.mask.count();
    n_bg += item.mask.dims().pixels() - item.mask.count();
  }
  if (n_fg == 0 || n_bg == 0) throw std::invalid_argument("fit_classifier: training data contains a single class");

  // Per image, k pixels of each class by sequential selection sampling (each
  // candidate kept with probability needed/remaining).
  std::vector<std::size_t> quota(gold.size());
  std::size_t n = 0;
  for (std::size_t g = 0; g < gold.size(); ++g) {
    const std::size_t fg = gold[g].mask.count();
    const std::size_t bg = gold[g].mask.dims().pixels() - fg;
    quota[g] = std::min(fg, bg);
    if (trainer.samples_per_class > 0) quota[g] = std::min(quota[g], trainer.samples_per_class);
    n += 2 * quota[g];
  }
  FeatureMatrix x(static_cast<Eigen::Index>(n), kFeatureCount);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::size_t row = 0;
  for (std::size_t g = 0; g < gold.size(); ++g) {
    if (quota[g] == 0) continue;
    const auto& item = gold[g];
    // Seeded by content, so an image contributes the same pixels to every
    // training set that contains it.
    Rng rng(derive_seed(seed, content_key(item)));
    const FeatureMatrix f = feature_matrix(item.image);
    const bool* bits = item.mask.bits().data();
    const std::size_t fg_total = item.mask.count();
    std::array<std::size_t, 2> needed{quota[g], quota[g]};
    std::array<std::size_t, 2> remaining{f.rows() - fg_total, fg_total};
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const int cls = bits[i] ? 1 : 0;
      if (needed[cls] > 0 && rng.below(remaining[cls]) < needed[cls]) {
        x.row(static_cast<Eigen::Index>(row)) = f.row(i);
        y(static_cast<Eigen::Index>(row++)) = cls;
        --needed[cls];
      }
      --remaining[cls];
    }
  }

  PixelClassifier model;
  model.feature_means = x.colwise().mean().transpose();
  const Eigen::ArrayXXd centered = x.array().rowwise() - model.feature_means.transpose().array();
  model.feature_stds = centered.square().colwise().mean().sqrt().transpose().matrix();
  for (int k = 0; k < kFeatureCount; ++k) {
    // Constant columns (the bias carrier) pass through unscaled.
    if (!(model.feature_stds(k) > 1e-12)) {
      model.feature_means(k) = 0.0;
      model.feature_stds(k) = 1.0;
    }
  }
  const FeatureMatrix z = ((x.array().rowwise() - model.feature_means.transpose().array()).rowwise() /
                           model.feature_stds.transpose().array())
                              .matrix();

  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd p(static_cast<Eigen::Index>(n));
  const auto forward = [&] {
    const Eigen::VectorXd logits = (z * model.weights).array() + model.bias;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      // log(1+exp(-|l|)) form stays finite for large logits.
      const double l = logits(i);
      const double e = std::exp(-std::abs(l));
      p(i) = l >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
      loss += std::max(l, 0.0) - l * y(i) + std::log1p(e);
    }
    return loss * inv_n;
  };

  if (loss_log) loss_log->clear();
  for (int epoch = 0; epoch < trainer.epochs; ++epoch) {
    const double loss = forward();
    if (loss_log) loss_log->push_back(loss);
    const Eigen::VectorXd residual = p - y;
    model.weights -= trainer.learn_rate * inv_n * (z.transpose() * residual);
    model.bias -= trainer.learn_rate * inv_n * residual.sum();
  }
  if (loss_log) loss_log->push_back(forward());
  return model;
}

ProbMask predict_coarse(const PixelClassifier& model, const GrayImage& img) {
  model.validate();
  const FeatureMatrix f = feature_matrix(img);
  const Eigen::VectorXd scaled_w = model.weights.array() / model.feature_stds.array();
  const double offset = model.bias - model.feature_means.dot(scaled_w);
  const Eigen::VectorXd logits = (f * scaled_w).array() + offset;
  Plane<double> probs(img.height(), img.width());
  for (Eigen::Index i = 0; i < logits.size(); ++i) probs.data()[i] = logistic(logits(i));
  return ProbMask(std::move(probs));
}

}  // namespace wlforge
