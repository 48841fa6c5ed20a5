#pragma once

// Checkpoint container, all integers little-endian:
//
//   magic      8 bytes   "ESIQACKP"
//   version    u32       1
//   text_len   u32
//   text       text_len bytes, UTF-8 "key = value" lines: the ModelConfig
//              keys followed by free-form "meta.*" keys (seed, epoch, ...)
//   count      u32       number of tensors
//   count x {
//     name_len u32, name (UTF-8),
//     rank     u32, extents u64 x rank,
//     values   f64 x prod(extents), IEEE-754 binary64
//   }
//   trailer    8 bytes   "ESIQAEND"

#include <stdexcept>
#include <string>

#include "esiqa/data/kv_config.hpp"
#include "esiqa/model/esiqanet.hpp"

namespace esiqa::model {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const EsiqaNet& model, const KvConfig& meta = {});

struct LoadedCheckpoint {
    std::unique_ptr<EsiqaNet> model;
    KvConfig meta;  // keys without the "meta." prefix
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace esiqa::model
