#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vfl/nn.hpp"
#include "vfl/tensor.hpp"

namespace vfl::nn {

// Checkpoint file: a textual shape manifest followed by the raw f64
// little-endian tensor data, concatenated in manifest order.
//
//   VFLCKPT 1
//   <name> <dim0> [dim1]
//   ...
//   end
//   <binary>
//
// Names are free-form tokens without spaces; save_models() uses
// "<prefix>.layer<i>.weight" / ".bias".

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& named);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path);

void save_models(const std::string& path,
                 const std::vector<std::pair<std::string, const Mlp*>>& models);

// Rebuilds the model saved under `prefix`; throws if the checkpoint lacks
// it or the layer tensors are inconsistent.
Mlp load_model(const std::string& path, const std::string& prefix);
bool checkpoint_has_model(const std::string& path, const std::string& prefix);

}  // namespace vfl::nn
