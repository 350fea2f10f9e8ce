#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "topiccap/runconfig.hpp"

namespace topiccap::cli {

// Stage commands. Each writes its artifacts plus resolved_config.json and
// summary.json under <out_dir>/<stage>/ and returns the summary. Stages
// verify the config-hash chain of everything they consume and throw
// ConfigError on cross-inconsistency, IoError on missing prerequisites and
// NonFiniteError on divergence. `log` (when non-null) receives one JSON line
// per noteworthy event.
nlohmann::json cmd_gen_data(const RunConfig& cfg, std::ostream* log = nullptr);
nlohmann::json cmd_train_lda(const RunConfig& cfg, std::ostream* log = nullptr);
nlohmann::json cmd_train_sae(const RunConfig& cfg, std::ostream* log = nullptr);
nlohmann::json cmd_train_captioner(const RunConfig& cfg, std::ostream* log = nullptr);
nlohmann::json cmd_eval(const RunConfig& cfg, std::ostream* log = nullptr);

// Captions one image from a raw little-endian float32 feature file with
// R*D values (D from the model, R inferred from the file size). When
// attention_dump is true, writes caption/attention.jsonl with one line per
// emitted word: word, alpha, topic_vector, top-5 topic ids.
nlohmann::json cmd_caption(const RunConfig& cfg, const std::string& features_path,
                           bool attention_dump = false, std::ostream* log = nullptr);

// Battery of finite-difference checks; summary.checks lists each name and
// max relative error, summary.all_pass gates the process exit code.
nlohmann::json cmd_gradcheck(const RunConfig& cfg, std::ostream* log = nullptr);

// Ablation grids: one row per CLTA topic dimension plus the
// {vanilla, denoising} x {h_first, h_last} SAE grid.
nlohmann::json cmd_ablate(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace topiccap::cli
