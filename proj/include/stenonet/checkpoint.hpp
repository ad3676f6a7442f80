#pragma once

#include <string>

#include "stenonet/graph.hpp"

namespace stenonet {

/// Weight checkpoint: one JSON header line listing {name, shape, offset}
/// per tensor, then the raw little-endian float32 payload. Covers every
/// parameter and batch-norm running statistic of the graph.
void save_checkpoint(Graph& graph, const std::string& path);

/// Loads a checkpoint, validating that the file provides exactly the
/// graph's named tensors at matching shapes. A missing or malformed file is
/// an error, never a silent fallback to random weights.
void load_checkpoint(Graph& graph, const std::string& path);

}  // namespace stenonet
