#include "wlforge/quality.hpp"

#include <cmath>
#include <stdexcept>

namespace wlforge {

std::string to_string(FilterReason reason) {
  switch (reason) {
    case FilterReason::Ok: return "ok";
    case FilterReason::EmptyCoarse: return "empty_coarse";
    case FilterReason::OverForeground: return "over_foreground";
    case FilterReason::OverBackground: return "over_background";
  }
  return "ok";
}

FilterReason parse_filter_reason(const std::string& text) {
  for (auto r : {FilterReason::Ok, FilterReason::EmptyCoarse, FilterReason::OverForeground, FilterReason::OverBackground})
    if (to_string(r) == text) return r;
  throw std::invalid_argument("unknown filter reason '" + text + "'");
}

std::uint64_t basis_points(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return 0;
  return (20000 * count + total) / (2 * total);
}

FilterVerdict accept_weak_label(const BinMask& mask, double tau_filter) {
  if (!(tau_filter > 0.5 && tau_filter < 1.0)) throw std::invalid_argument("tau_filter must lie in (0.5, 1)");
  const std::size_t total = mask.dims().pixels();
  const std::size_t fg = mask.count();
  const auto limit = static_cast<std::uint64_t>(std::llround(tau_filter * 10000.0));
  FilterVerdict v;
  v.fg_fraction = total ? static_cast<double>(fg) / static_cast<double>(total) : 0.0;
  if (basis_points(fg, total) > limit) {
    v.reason = FilterReason::OverForeground;
  } else if (basis_points(total - fg, total) > limit) {
    v.reason = FilterReason::OverBackground;
  } else {
    v.reason = FilterReason::Ok;
    v.accepted = true;
  }
  return v;
}

namespace {

void check_dims(const BinMask& a, const BinMask& b) {
  if (a.dims() != b.dims()) throw std::invalid_argument("metric inputs have different dimensions");
}

}  // namespace

double dice(const BinMask& a, const BinMask& b) {
  check_dims(a, b);
  const auto inter = static_cast<double>((a.bits() && b.bits()).count());
  const auto sum = static_cast<double>(a.count() + b.count());
  if (sum == 0.0) return 1.0;
  return 2.0 * inter / sum;
}

double iou(const BinMask& a, const BinMask& b) {
  check_dims(a, b);
  const auto inter = static_cast<double>((a.bits() && b.bits()).count());
  const auto uni = static_cast<double>((a.bits() || b.bits()).count());
  if (uni == 0.0) return 1.0;
  return inter / uni;
}

double pixel_accuracy(const BinMask& a, const BinMask& b) {
  check_dims(a, b);
  return static_cast<double>((a.bits() == b.bits()).count()) / static_cast<double>(a.dims().pixels());
}

Evaluation evaluate(std::span<const BinMask> predictions, std::span<const BinMask> gts) {
  if (predictions.empty()) throw std::invalid_argument("evaluate: no images");
  if (predictions.size() != gts.size()) throw std::invalid_argument("evaluate: prediction/ground-truth count mismatch");
  Evaluation ev;
  ev.per_image.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const ImageScore s{dice(predictions[i], gts[i]), iou(predictions[i], gts[i])};
    ev.mean_dice += s.dice;
    ev.mean_iou += s.iou;
    ev.per_image.push_back(s);
  }
  ev.mean_dice /= static_cast<double>(predictions.size());
  ev.mean_iou /= static_cast<double>(predictions.size());
  return ev;
}

std::string to_string(EvalPromptMode mode) {
  switch (mode) {
    case EvalPromptMode::AutoNone: return "auto_none";
    case EvalPromptMode::Box: return "box";
    case EvalPromptMode::Points: return "points";
  }
  return "auto_none";
}

EvalPromptMode parse_eval_prompt_mode(const std::string& text) {
  for (auto m : {EvalPromptMode::AutoNone, EvalPromptMode::Box, EvalPromptMode::Points})
    if (to_string(m) == text) return m;
  throw std::invalid_argument("unknown prompt mode '" + text + "' (expected auto_none|box|points)");
}

}  // namespace wlforge
