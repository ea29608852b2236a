#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "driftfuse/trainer.hpp"

namespace driftfuse {

// Checkpoint file, little-endian: "DFCK" | version u16 | then length-prefixed
// sections for the config echo, model, fusion snapshot, reservoir, rng
// streams, counters and the accuracy rows recorded so far. Written at task
// boundaries only, so no optimizer moments are stored (they reset per task).
inline constexpr char kCheckpointMagic[4] = {'D', 'F', 'C', 'K'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;  // ini text of the TrainConfig that produced it
  TrainerState state;
};

std::string encode_checkpoint(const TrainerState& state, std::string_view config_text);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const TrainerState& state,
                     std::string_view config_text);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace driftfuse
