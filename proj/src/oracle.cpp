#include "wlforge/random.hpp"
#include "wlforge/raster_io.hpp"
#include "wlforge/regions.hpp"
#include "wlforge/segmenter.hpp"
#include "wlforge/sidecar.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace wlforge {

void OracleFidelity::validate() const {
  if (dilate < 0) throw std::invalid_argument("fidelity dilate must be >= 0");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw std::invalid_argument("fidelity noise_rate must lie in [0,1]");
  if (flip_band < 1) throw std::invalid_argument("fidelity flip_band must be >= 1");
  if (box_leak < 0) throw std::invalid_argument("fidelity box_leak must be >= 0");
}

FidelityPreset medsam_like() { return {"medsam-like", {4, 0.05, 2, 4, 0}}; }
FidelityPreset sam_like() { return {"sam-like", {12, 0.20, 2, 8, 0}}; }
FidelityPreset perfect_oracle() { return {"perfect", {0, 0.0, 1, 0, 0}}; }

FidelityPreset fidelity_preset(const std::string& name) {
  for (auto preset : {medsam_like(), sam_like(), perfect_oracle()})
    if (preset.name == name) return preset;
  throw std::invalid_argument("unknown fidelity preset '" + name + "'");
}

namespace {

/// Chessboard distance from every pixel to the nearest pixel where `source`
/// is true; -1 where no source exists.
Plane<int> chessboard_distance(const Plane<bool>& source) {
  const int h = static_cast<int>(source.rows());
  const int w = static_cast<int>(source.cols());
  Plane<int> dist = Plane<int>::Constant(h, w, -1);
  std::deque<Pixel> frontier;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (source(r, c)) {
        dist(r, c) = 0;
        frontier.push_back({r, c});
      }
  while (!frontier.empty()) {
    const Pixel p = frontier.front();
    frontier.pop_front();
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int nr = p.row + dr, nc = p.col + dc;
        if (nr < 0 || nc < 0 || nr >= h || nc >= w || dist(nr, nc) != -1) continue;
        dist(nr, nc) = dist(p.row, p.col) + 1;
        frontier.push_back({nr, nc});
      }
    }
  }
  return dist;
}

BinMask grow_within(const BinMask& mask, int radius, const BoxPrompt& limit) {
  if (radius <= 0 || mask.count() == 0) return mask;
  const Plane<int> dist = chessboard_distance(mask.bits());
  BinMask out = mask;
  for (int r = limit.row_min; r <= limit.row_max; ++r)
    for (int c = limit.col_min; c <= limit.col_max; ++c)
      if (dist(r, c) >= 0 && dist(r, c) <= radius) out(r, c) = true;
  return out;
}

BinMask box_result(const BinMask& gt, const BoxPrompt& box, const OracleFidelity& fid) {
  const BoxPrompt grown{std::max(0, box.row_min - fid.dilate), std::max(0, box.col_min - fid.dilate),
                        std::min(gt.height() - 1, box.row_max + fid.dilate),
                        std::min(gt.width() - 1, box.col_max + fid.dilate)};
  BinMask out(gt.width(), gt.height());
  const auto rows = grown.row_max - grown.row_min + 1;
  const auto cols = grown.col_max - grown.col_min + 1;
  out.bits().block(grown.row_min, grown.col_min, rows, cols) = gt.bits().block(grown.row_min, grown.col_min, rows, cols);
  if (fid.box_leak == 0) return out;

  const auto box_rows = box.row_max - box.row_min + 1;
  const auto box_cols = box.col_max - box.col_min + 1;
  const double area_fraction = static_cast<double>(box_rows * box_cols) / static_cast<double>(gt.dims().pixels());
  if (area_fraction <= kLeakOnset) return out;
  const int radius = static_cast<int>(std::lround(fid.box_leak * (area_fraction - kLeakOnset) / (1.0 - kLeakOnset)));
  return grow_within(out, radius, grown);
}

BinMask points_result(const BinMask& gt, const PointPrompt& pts) {
  const auto comps = label_components(gt, Connectivity::Eight);
  Plane<int> owner = Plane<int>::Constant(gt.height(), gt.width(), -1);
  for (const auto& comp : comps)
    for (const auto& run : comp.runs) owner.row(run.row).segment(run.col_start, run.length()).setConstant(comp.id);

  std::vector<bool> chosen(comps.size(), false);
  for (const Pixel p : pts.positives) {
    if (!gt.dims().contains(p.row, p.col)) continue;
    int hit = owner(p.row, p.col);
    // Snap to the nearest target pixel (Chebyshev) within the radius; ring by
    // ring, row-major within a ring.
    for (int radius = 1; hit < 0 && radius <= kPointSnapRadius; ++radius) {
      for (int r = p.row - radius; hit < 0 && r <= p.row + radius; ++r) {
        for (int c = p.col - radius; c <= p.col + radius; ++c) {
          if (std::max(std::abs(r - p.row), std::abs(c - p.col)) != radius || !gt.dims().contains(r, c)) continue;
          if (owner(r, c) >= 0) {
            hit = owner(r, c);
            break;
          }
        }
      }
    }
    if (hit >= 0) chosen[static_cast<std::size_t>(hit)] = true;
  }
  for (const Pixel n : pts.negatives)
    if (gt.dims().contains(n.row, n.col) && owner(n.row, n.col) >= 0)
      chosen[static_cast<std::size_t>(owner(n.row, n.col))] = false;

  std::vector<Component> keep;
  for (const auto& comp : comps)
    if (chosen[static_cast<std::size_t>(comp.id)]) keep.push_back(comp);
  return paint(keep, gt.dims());
}

}  // namespace

BinMask boundary_band(const BinMask& mask, int band) {
  const Plane<bool> fg = mask.bits();
  const Plane<bool> bg = !mask.bits();
  const Plane<int> to_fg = chessboard_distance(fg);
  const Plane<int> to_bg = chessboard_distance(bg);
  BinMask out(mask.width(), mask.height());
  for (Eigen::Index i = 0; i < fg.size(); ++i) {
    const int d = fg.data()[i] ? to_bg.data()[i] : to_fg.data()[i];
    out.bits().data()[i] = d > 0 && d <= band;
  }
  return out;
}

BinMask oracle_prompted(const BinMask& gt, std::span<const Prompt> prompts, const OracleFidelity& fid) {
  fid.validate();
  BinMask result(gt.width(), gt.height());
  for (const auto& prompt : prompts) {
    if (!in_bounds(prompt, gt.dims())) throw std::invalid_argument("oracle_prompted: prompt out of bounds");
    const BinMask part = std::holds_alternative<BoxPrompt>(prompt)
                             ? box_result(gt, std::get<BoxPrompt>(prompt), fid)
                             : points_result(gt, std::get<PointPrompt>(prompt));
    result.bits() = result.bits() || part.bits();
  }
  if (fid.noise_rate <= 0.0) return result;

  // One uniform draw per band pixel in row-major order.
  const BinMask band = boundary_band(result, fid.flip_band);
  Rng rng(fid.seed);
  for (Eigen::Index i = 0; i < band.bits().size(); ++i) {
    if (!band.bits().data()[i]) continue;
    if (rng.uniform() < fid.noise_rate) result.bits().data()[i] = !result.bits().data()[i];
  }
  return result;
}

BinMask oracle_prompted(const BinMask& gt, const Prompt& prompt, const OracleFidelity& fid) {
  return oracle_prompted(gt, std::span<const Prompt>(&prompt, 1), fid);
}

std::string BackendConfig::name() const {
  if (kind == BackendKind::MockOracle) return "mock_oracle:" + preset;
  return "external:" + (external.command.empty() ? std::string("?") : external.command.front());
}

void BackendConfig::validate() const {
  if (kind == BackendKind::MockOracle) {
    fidelity.validate();
  } else {
    if (external.command.empty()) throw std::invalid_argument("external backend requires a command");
    if (!(external.timeout_seconds > 0.0)) throw std::invalid_argument("external backend timeout must be > 0");
    if (external.oracle_hints) external.oracle_hints->validate();
  }
}

OracleFidelity per_image_fidelity(const OracleFidelity& base, const std::string& image_id) {
  OracleFidelity out = base;
  out.seed = derive_seed(base.seed, image_id);
  return out;
}

MockOracleSegmenter::MockOracleSegmenter(OracleFidelity fidelity, std::string preset_name)
    : fidelity_(fidelity), preset_(std::move(preset_name)) {
  fidelity_.validate();
}

BinMask MockOracleSegmenter::segment(const GrayImage& img, std::span<const Prompt> prompts, const GroundTruthRef* gt) {
  if (!gt) throw std::invalid_argument("mock oracle backend requires a ground-truth handle");
  const BinMask truth = load_mask(gt->path);
  if (truth.dims() != img.dims()) throw std::invalid_argument("mock oracle: ground truth and image dims differ");
  return oracle_prompted(truth, prompts, per_image_fidelity(fidelity_, gt->id));
}

std::unique_ptr<PromptableSegmenter> make_segmenter(const BackendConfig& backend) {
  backend.validate();
  if (backend.kind == BackendKind::MockOracle)
    return std::make_unique<MockOracleSegmenter>(backend.fidelity, backend.preset);
  return std::make_unique<ExternalSegmenter>(backend.external);
}

BinMask predict_prompted(const BackendConfig& backend, const GrayImage& img, std::span<const Prompt> prompts,
                         const GroundTruthRef* gt) {
  return make_segmenter(backend)->segment(img, prompts, gt);
}

}  // namespace wlforge
