#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "cdamd/ad/graph.hpp"
#include "cdamd/types.hpp"

namespace cdamd {

// Named-tensor checkpoint: float32 LE payload plus a JSON metadata blob.
// Tensors are written in name order, so identical contents produce identical
// bytes.
struct Checkpoint {
  std::map<std::string, MatF> tensors;
  nlohmann::json metadata;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path, bool force = true);
Checkpoint load_checkpoint(const std::string& path);

void store_params(Checkpoint& ckpt, const ad::ParamStore<float>& params,
                  const std::string& prefix = "");
void load_params(const Checkpoint& ckpt, ad::ParamStore<float>& params,
                 const std::string& prefix = "");

}  // namespace cdamd
