// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "flowforge/run_config.hpp"

namespace flowforge {

/// CLI entry points. Each command validates its inputs, writes its outputs
/// plus a config snapshot and manifest under out_dir, and throws typed errors
/// that main() maps to the documented exit codes (2 config, 3 missing input,
/// 4 I/O, 5 numerical).

void cmd_gen_data(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                  const std::filesystem::path& out_dir);

void cmd_pretrain(const RunConfig& cfg, const std::filesystem::path& out_dir);

void cmd_finetune(const RunConfig& cfg, const std::filesystem::path& base_checkpoint,
                  const std::filesystem::path& dataset, const std::filesystem::path& out_dir);

void cmd_score(const RunConfig& cfg, const std::filesystem::path& dataset, const std::filesystem::path& out_dir);

void cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir);

void cmd_ablate(const RunConfig& cfg, const std::string& mode, const std::filesystem::path& checkpoint,
                const std::optional<std::filesystem::path>& dataset, const std::filesystem::path& out_dir);

void cmd_render(const RunConfig& cfg, const std::optional<std::filesystem::path>& dataset,
                std::optional<std::uint64_t> record_id, const std::optional<std::string>& dimension,
                std::uint64_t sim_seed, std::size_t resolution, const std::filesystem::path& out_dir);

}  // namespace flowforge
