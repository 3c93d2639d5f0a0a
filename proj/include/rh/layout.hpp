#pragma once

#include <set>
#include <string>
#include <vector>

namespace rh {

enum class MarkGroup { top, bottom, edge };

[[nodiscard]] std::string to_string(MarkGroup g);
[[nodiscard]] MarkGroup mark_group_from_string(const std::string& s);

struct Mark {
  double x = 0.0;  // mm
  double y = 0.0;  // mm
  MarkGroup group = MarkGroup::top;
};

struct MarkLayout {
  std::vector<Mark> marks;
  std::set<MarkGroup> active_groups{MarkGroup::top, MarkGroup::bottom, MarkGroup::edge};

  [[nodiscard]] std::vector<Mark> active() const;
  [[nodiscard]] MarkLayout with_groups(std::set<MarkGroup> groups) const;
};

struct ImageArea;

/// Top/bottom rows of `per_side` marks just outside the image area's long
/// edges, plus `edge_per_side` marks beside each short edge.
[[nodiscard]] MarkLayout standard_layout(const ImageArea& area, int per_side = 5,
                                         int edge_per_side = 3, double offset_mm = 4.0);

}  // namespace rh
