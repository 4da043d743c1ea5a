#include "wlforge/regions.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace wlforge {

bool Component::contains(int row, int col) const {
  auto it = std::lower_bound(runs.begin(), runs.end(), row, [](const Run& r, int target) { return r.row < target; });
  for (; it != runs.end() && it->row == row; ++it) {
    if (col >= it->col_start && col <= it->col_end) return true;
  }
  return false;
}

std::vector<Pixel> Component::pixels() const {
  std::vector<Pixel> out;
  out.reserve(area);
  for (const auto& run : runs)
    for (int c = run.col_start; c <= run.col_end; ++c) out.push_back({run.row, c});
  return out;
}

void RegionPolicy::validate() const {
  if (!(rel_area_min >= 0.0 && rel_area_min <= 1.0)) throw std::invalid_argument("rel_area_min must lie in [0,1]");
  if (abs_area_min < 1) throw std::invalid_argument("abs_area_min must be >= 1");
  if (max_regions < 1) throw std::invalid_argument("max_regions must be >= 1");
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Smaller index wins, so roots are the first run in scan order.
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<Component> label_components(const BinMask& mask, Connectivity connectivity) {
  const int h = mask.height();
  const int w = mask.width();
  const int reach = connectivity == Connectivity::Eight ? 1 : 0;

  std::vector<Run> runs;
  std::vector<std::size_t> row_begin(static_cast<std::size_t>(h) + 1, 0);
  for (int r = 0; r < h; ++r) {
    row_begin[r] = runs.size();
    int c = 0;
    while (c < w) {
      if (!mask(r, c)) {
        ++c;
        continue;
      }
      const int start = c;
      while (c < w && mask(r, c)) ++c;
      runs.push_back({r, start, c - 1});
    }
  }
  row_begin[h] = runs.size();

  DisjointSets sets(runs.size());
  for (int r = 1; r < h; ++r) {
    std::size_t above = row_begin[r - 1];
    const std::size_t above_end = row_begin[r];
    for (std::size_t i = row_begin[r]; i < row_begin[r + 1]; ++i) {
      const Run& cur = runs[i];
      // Runs above that end left of the reachable window can never touch a later run.
      while (above < above_end && runs[above].col_end + reach < cur.col_start) ++above;
      for (std::size_t j = above; j < above_end && runs[j].col_start <= cur.col_end + reach; ++j) sets.unite(i, j);
    }
  }

  std::vector<Component> comps;
  std::vector<std::size_t> slot(runs.size(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::size_t root = sets.find(i);
    if (slot[root] == static_cast<std::size_t>(-1)) {
      slot[root] = comps.size();
      Component c;
      c.bbox = {runs[i].row, runs[i].col_start, runs[i].row, runs[i].col_end};
      comps.push_back(std::move(c));
    }
    Component& comp = comps[slot[root]];
    const Run& run = runs[i];
    comp.runs.push_back(run);
    comp.area += static_cast<std::size_t>(run.length());
    comp.bbox.row_min = std::min(comp.bbox.row_min, run.row);
    comp.bbox.row_max = std::max(comp.bbox.row_max, run.row);
    comp.bbox.col_min = std::min(comp.bbox.col_min, run.col_start);
    comp.bbox.col_max = std::max(comp.bbox.col_max, run.col_end);
  }

  std::sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.area != b.area) return a.area > b.area;
    if (a.bbox.row_min != b.bbox.row_min) return a.bbox.row_min < b.bbox.row_min;
    return a.bbox.col_min < b.bbox.col_min;
  });
  for (std::size_t i = 0; i < comps.size(); ++i) comps[i].id = static_cast<int>(i);
  return comps;
}

std::vector<Component> select_regions(const std::vector<Component>& comps, const RegionPolicy& policy) {
  policy.validate();
  std::vector<Component> kept;
  if (comps.empty()) return kept;
  const double rel_cut = policy.rel_area_min * static_cast<double>(comps.front().area);
  for (const auto& c : comps) {
    if (kept.size() >= policy.max_regions) break;
    const auto area = static_cast<double>(c.area);
    if (c.area >= policy.abs_area_min && area >= rel_cut) kept.push_back(c);
  }
  return kept;
}

Plane<int> interior_distance(const Component& comp) {
  const BBox& b = comp.bbox;
  // One-pixel frame of non-members around the bbox stands in for the rest of
  // the complement: any path to a farther non-member crosses the frame first.
  const int h = b.row_max - b.row_min + 3;
  const int w = b.col_max - b.col_min + 3;
  Plane<int> dist = Plane<int>::Constant(h, w, -1);
  std::deque<Pixel> frontier;
  for (const auto& run : comp.runs)
    for (int c = run.col_start; c <= run.col_end; ++c) dist(run.row - b.row_min + 1, c - b.col_min + 1) = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (dist(r, c) == -1) {
        dist(r, c) = 0;
        frontier.push_back({r, c});
      } else {
        dist(r, c) = -2;  // member, unvisited
      }
    }
  }
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  while (!frontier.empty()) {
    const Pixel p = frontier.front();
    frontier.pop_front();
    for (int k = 0; k < 4; ++k) {
      const int nr = p.row + dr[k];
      const int nc = p.col + dc[k];
      if (nr < 0 || nc < 0 || nr >= h || nc >= w || dist(nr, nc) != -2) continue;
      dist(nr, nc) = dist(p.row, p.col) + 1;
      frontier.push_back({nr, nc});
    }
  }
  return dist.block(1, 1, h - 2, w - 2);
}

Pixel innermost_point(const Component& comp, Dims mask_dims) {
  if (comp.area == 0 || comp.runs.empty()) throw std::invalid_argument("innermost_point of an empty component");
  if (!mask_dims.contains(comp.bbox.row_max, comp.bbox.col_max))
    throw std::invalid_argument("component exceeds mask dimensions");
  const Plane<int> dist = interior_distance(comp);
  Pixel best{comp.runs.front().row, comp.runs.front().col_start};
  int best_d = -1;
  // Row-major scan with strict improvement keeps the first (row, col) on ties.
  for (int r = 0; r < dist.rows(); ++r) {
    for (int c = 0; c < dist.cols(); ++c) {
      if (dist(r, c) > best_d) {
        best_d = dist(r, c);
        best = {r + comp.bbox.row_min, c + comp.bbox.col_min};
      }
    }
  }
  return best;
}

BBox bbox_of(const Component& comp) {
  if (comp.runs.empty()) throw std::invalid_argument("bbox_of an empty component");
  BBox b{comp.runs.front().row, comp.runs.front().col_start, comp.runs.front().row, comp.runs.front().col_end};
  for (const auto& run : comp.runs) {
    b.row_min = std::min(b.row_min, run.row);
    b.row_max = std::max(b.row_max, run.row);
    b.col_min = std::min(b.col_min, run.col_start);
    b.col_max = std::max(b.col_max, run.col_end);
  }
  return b;
}

BinMask paint(const std::vector<Component>& comps, Dims dims) {
  BinMask out(dims.width, dims.height);
  for (const auto& comp : comps)
    for (const auto& run : comp.runs) out.bits().row(run.row).segment(run.col_start, run.length()).setConstant(true);
  return out;
}

}  // namespace wlforge
