#pragma once

#include <iosfwd>
#include <string>

#include "brw/geometry.hpp"

namespace brw {

// Line-oriented text format:
//   n L gamma topology R_c seed
//   id x1 ... xn          (one per point, ids 0..count-1 in order)
//   src dst rate          (one per directed edge)
// Lines starting with '#' are comments. A line belongs to the point block while its first
// field equals the next expected point id; edge sources are always below the point count,
// so the first edge line ends the block.

void write_graph(std::ostream& out, const RateGraph& graph);
void write_graph(const std::string& path, const RateGraph& graph);

RateGraph read_graph(std::istream& in);
RateGraph read_graph(const std::string& path);

}  // namespace brw
