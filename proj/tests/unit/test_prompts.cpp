#include "../support/oracles.hpp"

#include "wlforge/prompts.hpp"

#include <doctest.h>

using namespace wlforge;

namespace {

ProbMask blocks(int w, int h, std::initializer_list<BBox> boxes, double inside = 0.9, double outside = 0.05) {
  Plane<double> p = Plane<double>::Constant(h, w, outside);
  for (const auto& b : boxes) p.block(b.row_min, b.col_min, b.row_max - b.row_min + 1, b.col_max - b.col_min + 1) = inside;
  return ProbMask(p);
}

GrayImage blank(int w, int h) { return GrayImage(w, h, 0.5); }

}  // namespace

TEST_SUITE("prompts") {

TEST_CASE("empty coarse mask is filtered") {
  PromptSpec spec;
  CHECK_FALSE(build_prompts(ProbMask(32, 32, 0.0), blank(32, 32), spec).has_value());
  spec.mode = PromptMode::Points;
  CHECK_FALSE(build_prompts(ProbMask(32, 32, 0.0), blank(32, 32), spec).has_value());
  // Speckle below the area policy is filtered too.
  CHECK_FALSE(build_prompts(blocks(32, 32, {{3, 3, 4, 4}}), blank(32, 32), spec).has_value());
  CHECK_THROWS(build_prompts(ProbMask(8, 8, 0.0), blank(9, 8), spec));
}

TEST_CASE("box of a solid block") {
  PromptSpec spec;
  spec.box_pad = 0;
  const auto prompts = build_prompts(blocks(32, 32, {{5, 5, 14, 14}}), blank(32, 32), spec);
  REQUIRE(prompts);
  REQUIRE(prompts->size() == 1);
  CHECK(std::get<BoxPrompt>(prompts->front()) == BoxPrompt{5, 5, 14, 14});

  spec.box_pad = 4;
  const auto padded = build_prompts(blocks(20, 20, {{1, 2, 10, 18}}), blank(20, 20), spec);
  CHECK(std::get<BoxPrompt>(padded->front()) == BoxPrompt{0, 0, 14, 19});
}

TEST_CASE("two blocks give two positives, one inside each") {
  PromptSpec spec;
  spec.mode = PromptMode::Points;
  const ProbMask coarse = blocks(48, 48, {{2, 2, 11, 11}, {30, 30, 37, 39}});  // areas 100 and 80
  const auto prompts = build_prompts(coarse, blank(48, 48), spec);
  REQUIRE(prompts);
  REQUIRE(prompts->size() == 1);
  const auto& pts = std::get<PointPrompt>(prompts->front());
  REQUIRE(pts.positives.size() == 2);
  int n = 0;
  const auto labels = oracle::flood_labels(binarize(coarse), Connectivity::Eight, &n);
  REQUIRE(n == 2);
  std::set<int> hit;
  for (const auto& p : pts.positives) hit.insert(labels[p.row][p.col]);
  CHECK(hit == std::set<int>{1, 2});
  for (const auto& q : pts.negatives) {
    CHECK(labels[q.row][q.col] == 0);
    CHECK(coarse(q.row, q.col) < spec.neg_tau);
  }

  spec.split_points = true;
  const auto split = build_prompts(coarse, blank(48, 48), spec);
  CHECK(split->size() == 2);
}

TEST_CASE("negative sampling") {
  PromptSpec spec;
  const BinMask none(16, 16);
  CHECK(sample_negatives(ProbMask(16, 16, 0.9), none, spec).empty());

  Plane<double> p = Plane<double>::Constant(32, 32, 0.5);
  p(1, 1) = 0.0;
  p(1, 30) = 0.0;
  p(30, 15) = 0.0;
  const auto three = sample_negatives(ProbMask(p), BinMask(32, 32), spec);
  CHECK(three == std::vector<Pixel>{{1, 1}, {1, 30}, {30, 15}});

  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    Plane<double> r(40, 40);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
    const ProbMask probs(r);
    const BinMask fg = binarize(probs, 0.5);
    const std::vector<Pixel> avoid{{20, 20}};
    const auto negs = sample_negatives(probs, fg, spec, avoid);
    CHECK(negs.size() <= spec.neg_count);
    for (std::size_t i = 0; i < negs.size(); ++i) {
      CHECK(probs(negs[i].row, negs[i].col) < spec.neg_tau);
      CHECK_FALSE(fg(negs[i].row, negs[i].col));
      CHECK(std::max(std::abs(negs[i].row - 20), std::abs(negs[i].col - 20)) >= spec.neg_min_sep);
      for (std::size_t j = 0; j < i; ++j)
        CHECK(std::max(std::abs(negs[i].row - negs[j].row), std::abs(negs[i].col - negs[j].col)) >= spec.neg_min_sep);
    }
    PromptSpec other = spec;
    other.seed = 99;
    CHECK(sample_negatives(probs, fg, other, avoid) == negs);
  }
}

TEST_CASE("darkest strategy finds a dark disk") {
  Plane<double> p = Plane<double>::Constant(128, 128, 0.8);
  BBox want{1000, 1000, -1, -1};
  for (int r = 0; r < 128; ++r)
    for (int c = 0; c < 128; ++c)
      if ((r - 60) * (r - 60) + (c - 40) * (c - 40) <= 400) {
        p(r, c) = 0.1;
        want = {std::min(want.row_min, r), std::min(want.col_min, c), std::max(want.row_max, r), std::max(want.col_max, c)};
      }
  PromptSpec spec;
  spec.strategy = PromptStrategy::Darkest;
  spec.box_pad = 0;
  const auto prompts = build_prompts(ProbMask(128, 128, 0.0), GrayImage(p), spec);
  REQUIRE(prompts);
  REQUIRE(prompts->size() == 1);
  const auto& b = std::get<BoxPrompt>(prompts->front());
  CHECK(b == BoxPrompt{want.row_min, want.col_min, want.row_max, want.col_max});
  CHECK_FALSE(build_prompts(ProbMask(128, 128, 0.0), GrayImage(128, 128, 0.4), spec));  // no contrast
}

TEST_CASE("full image box") {
  PromptSpec spec;
  spec.box_pad = 0;
  CHECK(std::get<BoxPrompt>(full_image_box(blank(256, 256), spec).front()) == BoxPrompt{0, 0, 255, 255});
  spec.box_pad = 16;
  CHECK(std::get<BoxPrompt>(full_image_box(blank(256, 256), spec).front()) == BoxPrompt{16, 16, 239, 239});
  spec.box_pad = 30;
  CHECK_THROWS(full_image_box(blank(100, 50), spec));
  spec.strategy = PromptStrategy::FullBox;
  spec.box_pad = 2;
  CHECK(build_prompts(ProbMask(64, 64, 0.0), blank(64, 64), spec)->size() == 1);
}

TEST_CASE("random coarse maps give in-bounds, valid prompts deterministically") {
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    Plane<double> r(48, 48);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform() < 0.3 ? 0.95 : 0.02;
    const ProbMask probs(r);
    for (auto mode : {PromptMode::Box, PromptMode::Points}) {
      PromptSpec spec;
      spec.mode = mode;
      spec.box_pad = static_cast<int>(rng.below(6));
      const auto a = build_prompts(probs, blank(48, 48), spec);
      const auto b = build_prompts(probs, blank(48, 48), spec);
      CHECK(a == b);
      const bool any = !select_regions(label_components(binarize(probs)), spec.policy).empty();
      CHECK(a.has_value() == any);
      if (!a) continue;
      for (const auto& p : *a) CHECK(in_bounds(p, probs.dims()));
    }
  }
}

TEST_CASE("PromptSpec validation") {
  PromptSpec s;
  s.neg_tau = 0.6;
  CHECK_THROWS(s.validate());
  s = PromptSpec{};
  s.neg_min_sep = 0;
  CHECK_THROWS(s.validate());
  s = PromptSpec{};
  s.box_pad = -1;
  CHECK_THROWS(s.validate());
  CHECK(parse_prompt_strategy("full_box") == PromptStrategy::FullBox);
  CHECK_THROWS(parse_prompt_mode("scribble"));
}

}
