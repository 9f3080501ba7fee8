#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "atr/net.hpp"

namespace atr::nn {

// Named flat block stored after the layer weights (normalizers, refiners).
struct CheckpointExtra {
  std::string name;
  std::vector<float> values;
};

struct Checkpoint {
  RegressionNet net;
  std::vector<CheckpointExtra> extras;

  [[nodiscard]] const CheckpointExtra* find(const std::string& name) const;
};

// Text part of an "ATRN" file, through the terminating "end" line.
std::string checkpoint_header(const NetSpec& spec, std::uint64_t seed, std::uint64_t step,
                              const std::vector<CheckpointExtra>& extras = {});

void save_checkpoint(const RegressionNet& net, const std::filesystem::path& path,
                     const std::vector<CheckpointExtra>& extras = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace atr::nn
