#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "sr4ir/nets.hpp"
#include "sr4ir/tensor.hpp"

namespace sr4ir {

// Tensor snapshot: little-endian, magic "SR4T", u32 rank, u32 extents, then
// raw 32-bit floats row-major. Checkpoints and test fixtures share it.
void write_tensor(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor<float>& t);
Tensor<float> load_tensor(const std::string& path);

// Named-tensor container: magic "SR4C", u32 entry count, then per entry
// u16 name length, name bytes, tensor snapshot. The trainer appends its
// optimizer-state tensors and step counters after the entries.
using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;
void write_entries(std::ostream& out, const NamedTensors& entries);
NamedTensors read_entries(std::istream& in);

void save_params(const std::string& path, const ParamSet<float>& params);
ParamSet<float> load_params(const std::string& path);

}  // namespace sr4ir
