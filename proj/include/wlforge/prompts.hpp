#pragma once

#include "wlforge/raster.hpp"
#include "wlforge/regions.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace wlforge {

struct BoxPrompt {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;
  friend bool operator==(const BoxPrompt&, const BoxPrompt&) = default;
};

struct PointPrompt {
  std::vector<Pixel> positives;
  std::vector<Pixel> negatives;
  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

using Prompt = std::variant<BoxPrompt, PointPrompt>;

enum class PromptMode { Box, Points };
enum class PromptStrategy { Coarse, Darkest, FullBox };

std::string to_string(PromptMode mode);
std::string to_string(PromptStrategy strategy);
PromptMode parse_prompt_mode(const std::string& text);
PromptStrategy parse_prompt_strategy(const std::string& text);

struct PromptSpec {
  PromptMode mode = PromptMode::Box;
  PromptStrategy strategy = PromptStrategy::Coarse;
  double binarize_tau = 0.5;
  RegionPolicy policy;
  Connectivity connectivity = Connectivity::Eight;
  std::size_t neg_count = 3;
  double neg_tau = 0.1;
  int neg_min_sep = 8;
  int box_pad = 2;
  /// Points mode: one PointPrompt per selected region instead of one combined prompt.
  bool split_points = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fraction of darkest pixels taken as foreground by the darkest-pixel baseline.
inline constexpr double kDarkestPercentile = 0.05;

/// Prompts for one image, or nullopt when the sample is filtered out because
/// no region survives the policy.
std::optional<std::vector<Prompt>> build_prompts(const ProbMask& coarse, const GrayImage& img, const PromptSpec& spec);

/// Region -> prompt path shared by every strategy. `scores` ranks pixels for
/// negative sampling (low score = confidently background).
std::optional<std::vector<Prompt>> prompts_from_foreground(const BinMask& fg, const ProbMask& scores,
                                                           const PromptSpec& spec);

/// Lowest-probability background pixels, greedily separated by Chebyshev
/// distance >= neg_min_sep from each other and from every avoid point.
std::vector<Pixel> sample_negatives(const ProbMask& coarse, const BinMask& fg, const PromptSpec& spec,
                                    std::span<const Pixel> avoid = {});

std::optional<std::vector<Prompt>> darkest_prompt(const GrayImage& img, const PromptSpec& spec);

std::vector<Prompt> full_image_box(const GrayImage& img, const PromptSpec& spec);

/// True when every coordinate of the prompt lies inside dims.
bool in_bounds(const Prompt& prompt, Dims dims);

}  // namespace wlforge
