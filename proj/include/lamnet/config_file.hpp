#pragma once

#include <iosfwd>
#include <string>

#include "lamnet/model.hpp"
#include "lamnet/trainer.hpp"

namespace lamnet {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One run description: model hyper-parameters, training schedule, data
// locations and output paths. Serialized as `key = value` lines; parse and
// emit round-trip exactly and unknown keys are rejected.
struct CliConfig {
  LamNetConfig model;
  TrainConfig train;
  std::string hr_dir;
  std::string lr_dir;   // empty = synthesize LR by bicubic downscaling
  std::string log_out = "train_log.csv";
  std::string init_from;  // checkpoint to transfer-init from (new rec head)

  bool operator==(const CliConfig&) const = default;
};

CliConfig parse_config(std::istream& in);
CliConfig parse_config_file(const std::string& path);
void emit_config(std::ostream& out, const CliConfig& c);

}  // namespace lamnet
