#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "spi/config.hpp"
#include "spi/rng.hpp"

namespace spi {

// Stable stream-seed derivation for pipeline stages; the label (a fraction
// such as "1/4" or a frame count such as "n2048") is hashed into the stream.
std::uint64_t pipeline_seed(std::uint64_t master, Stage stage, int replicate,
                            const std::string& label);

// Runs simulate -> reduce -> split -> EMC per half -> rotational alignment ->
// phasing per half -> metrics for every sweep point and replicate. Artifacts
// and report.json land in cfg.output_folder. Stage failures are recorded in
// the report and skip the replicate; the run carries on.
//
// The returned document is byte-deterministic for a fixed master seed,
// independent of the worker count.
nlohmann::ordered_json run_pipeline(const PipelineConfig& cfg);

} // namespace spi
