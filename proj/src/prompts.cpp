#include "wlforge/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace wlforge {

std::string to_string(PromptMode mode) { return mode == PromptMode::Box ? "box" : "points"; }

std::string to_string(PromptStrategy strategy) {
  switch (strategy) {
    case PromptStrategy::Coarse: return "coarse";
    case PromptStrategy::Darkest: return "darkest";
    case PromptStrategy::FullBox: return "full_box";
  }
  return "coarse";
}

PromptMode parse_prompt_mode(const std::string& text) {
  if (text == "box") return PromptMode::Box;
  if (text == "points") return PromptMode::Points;
  throw std::invalid_argument("unknown prompt mode '" + text + "' (expected box|points)");
}

PromptStrategy parse_prompt_strategy(const std::string& text) {
  if (text == "coarse") return PromptStrategy::Coarse;
  if (text == "darkest") return PromptStrategy::Darkest;
  if (text == "full_box") return PromptStrategy::FullBox;
  throw std::invalid_argument("unknown prompt strategy '" + text + "' (expected coarse|darkest|full_box)");
}

void PromptSpec::validate() const {
  policy.validate();
  if (!(binarize_tau >= 0.0 && binarize_tau <= 1.0)) throw std::invalid_argument("binarize_tau must lie in [0,1]");
  if (!(neg_tau >= 0.0 && neg_tau < binarize_tau)) throw std::invalid_argument("neg_tau must lie in [0, binarize_tau)");
  if (neg_min_sep < 1) throw std::invalid_argument("neg_min_sep must be >= 1");
  if (box_pad < 0) throw std::invalid_argument("box_pad must be >= 0");
}

namespace {

int chebyshev(Pixel a, Pixel b) { return std::max(std::abs(a.row - b.row), std::abs(a.col - b.col)); }

}  // namespace

std::vector<Pixel> sample_negatives(const ProbMask& coarse, const BinMask& fg, const PromptSpec& spec,
                                    std::span<const Pixel> avoid) {
  if (coarse.dims() != fg.dims()) throw std::invalid_argument("sample_negatives: dimension mismatch");
  std::vector<Pixel> chosen;
  if (spec.neg_count == 0) return chosen;

  const int w = coarse.width();
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < coarse.dims().pixels(); ++i) {
    if (coarse.data()[i] < spec.neg_tau && !fg.bits().data()[i]) eligible.push_back(i);
  }
  // Ascending probability, ties by row-major index. The rule leaves no tie for
  // the seed to break, so the result is seed-independent.
  std::stable_sort(eligible.begin(), eligible.end(),
                   [&](std::size_t a, std::size_t b) { return coarse.data()[a] < coarse.data()[b]; });

  for (std::size_t idx : eligible) {
    const Pixel p{static_cast<int>(idx / w), static_cast<int>(idx % w)};
    const auto far = [&](Pixel q) { return chebyshev(p, q) >= spec.neg_min_sep; };
    if (!std::all_of(avoid.begin(), avoid.end(), far) || !std::all_of(chosen.begin(), chosen.end(), far)) continue;
    chosen.push_back(p);
    if (chosen.size() >= spec.neg_count) break;
  }
  return chosen;
}

std::optional<std::vector<Prompt>> prompts_from_foreground(const BinMask& fg, const ProbMask& scores,
                                                           const PromptSpec& spec) {
  spec.validate();
  const auto regions = select_regions(label_components(fg, spec.connectivity), spec.policy);
  if (regions.empty()) return std::nullopt;

  std::vector<Prompt> prompts;
  const Dims dims = fg.dims();
  if (spec.mode == PromptMode::Box) {
    for (const auto& region : regions) {
      const BBox b = bbox_of(region);
      prompts.push_back(BoxPrompt{std::max(0, b.row_min - spec.box_pad), std::max(0, b.col_min - spec.box_pad),
                                  std::min(dims.height - 1, b.row_max + spec.box_pad),
                                  std::min(dims.width - 1, b.col_max + spec.box_pad)});
    }
    return prompts;
  }

  std::vector<Pixel> positives;
  positives.reserve(regions.size());
  for (const auto& region : regions) positives.push_back(innermost_point(region, dims));
  auto negatives = sample_negatives(scores, fg, spec, positives);
  if (spec.split_points) {
    for (const auto& p : positives) prompts.push_back(PointPrompt{{p}, negatives});
  } else {
    prompts.push_back(PointPrompt{std::move(positives), std::move(negatives)});
  }
  return prompts;
}

std::optional<std::vector<Prompt>> darkest_prompt(const GrayImage& img, const PromptSpec& spec) {
  const std::size_t n = img.dims().pixels();
  std::vector<double> sorted(img.data(), img.data() + n);
  const auto k = static_cast<std::size_t>(std::max<double>(0.0, std::ceil(kDarkestPercentile * n) - 1.0));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k), sorted.end());
  const double cutoff = sorted[k];

  BinMask fg(Plane<bool>(img.values() <= cutoff));
  // No contrast: the "darkest" set is the whole frame and carries no location.
  if (fg.count() == n) return std::nullopt;
  const ProbMask darkness(Plane<double>(1.0 - img.values()));
  return prompts_from_foreground(fg, darkness, spec);
}

std::vector<Prompt> full_image_box(const GrayImage& img, const PromptSpec& spec) {
  if (spec.box_pad < 0 || 2 * spec.box_pad >= std::min(img.width(), img.height()))
    throw std::invalid_argument("full_image_box: box_pad must be below half the smaller image side");
  const int p = spec.box_pad;
  return {BoxPrompt{p, p, img.height() - 1 - p, img.width() - 1 - p}};
}

std::optional<std::vector<Prompt>> build_prompts(const ProbMask& coarse, const GrayImage& img, const PromptSpec& spec) {
  if (coarse.dims() != img.dims()) throw std::invalid_argument("build_prompts: coarse mask and image dimensions differ");
  switch (spec.strategy) {
    case PromptStrategy::Coarse: return prompts_from_foreground(binarize(coarse, spec.binarize_tau), coarse, spec);
    case PromptStrategy::Darkest: return darkest_prompt(img, spec);
    case PromptStrategy::FullBox: return full_image_box(img, spec);
  }
  return std::nullopt;
}

bool in_bounds(const Prompt& prompt, Dims dims) {
  if (const auto* box = std::get_if<BoxPrompt>(&prompt)) {
    return box->row_min >= 0 && box->col_min >= 0 && box->row_min <= box->row_max && box->col_min <= box->col_max &&
           box->row_max < dims.height && box->col_max < dims.width;
  }
  const auto& pts = std::get<PointPrompt>(prompt);
  const auto inside = [&](Pixel p) { return dims.contains(p.row, p.col); };
  return !pts.positives.empty() && std::all_of(pts.positives.begin(), pts.positives.end(), inside) &&
         std::all_of(pts.negatives.begin(), pts.negatives.end(), inside);
}

}  // namespace wlforge
