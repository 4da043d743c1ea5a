#pragma once

#include "wlforge/raster.hpp"

#include <cstddef>
#include <limits>
#include <vector>

namespace wlforge {

enum class Connectivity { Four = 4, Eight = 8 };

struct Pixel {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// Inclusive bounds.
struct BBox {
  int row_min = 0;
  int col_min = 0;
  int row_max = 0;
  int col_max = 0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Horizontal run of foreground pixels [col_start, col_end] on one row.
struct Run {
  int row = 0;
  int col_start = 0;
  int col_end = 0;
  [[nodiscard]] int length() const { return col_end - col_start + 1; }
  friend bool operator==(const Run&, const Run&) = default;
};

/// One contiguous foreground region. Runs are sorted by (row, col_start),
/// non-overlapping and non-adjacent within a row.
struct Component {
  int id = 0;
  std::size_t area = 0;
  BBox bbox;
  std::vector<Run> runs;

  [[nodiscard]] bool contains(int row, int col) const;
  [[nodiscard]] std::vector<Pixel> pixels() const;
};

struct RegionPolicy {
  double rel_area_min = 0.25;
  std::size_t abs_area_min = 10;
  std::size_t max_regions = 3;

  void validate() const;
};

/// Two-pass run-based labeling with union-find. Output is sorted by area
/// descending, ties by (row_min, col_min) ascending; ids are list positions.
std::vector<Component> label_components(const BinMask& mask, Connectivity connectivity = Connectivity::Eight);

/// Keeps components with area >= max(abs_area_min, rel_area_min * largest),
/// truncated to max_regions. Input must already be sorted by area descending.
std::vector<Component> select_regions(const std::vector<Component>& comps, const RegionPolicy& policy);

/// City-block distance from each member pixel to the nearest non-member
/// pixel, where everything outside the image counts as non-member.
/// Returned plane spans the component bbox; non-members hold 0.
Plane<int> interior_distance(const Component& comp);

/// Member pixel maximizing interior_distance; ties by smallest row, then col.
Pixel innermost_point(const Component& comp, Dims mask_dims);

BBox bbox_of(const Component& comp);

/// Rasterizes components back into a mask of the given size.
BinMask paint(const std::vector<Component>& comps, Dims dims);

}  // namespace wlforge
