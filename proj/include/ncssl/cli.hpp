#pragma once

// Command-line front end. Every experiment is described by a flat set of
// `key = value` pairs: built-in defaults, then a config file, then the
// NCSSL_OUTPUT_DIR environment variable (output_dir only), then flags.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ncssl/error.hpp"

namespace ncssl::cli {

enum class KeyType { text, real, integer, count, boolean, real_list, seed_list, count_list };

struct KeySpec {
    std::string_view name;
    KeyType type;
    std::string_view default_value;
    std::string_view help;
};

const std::vector<KeySpec>& key_specs();
const std::vector<std::string_view>& experiment_names();

class ExperimentConfig {
public:
    ExperimentConfig();

    /// Throws InvalidConfig for unknown keys. `origin` says where the value came
    /// from ("run.cfg:4", "--eta", ...) and is quoted in later errors.
    void set(std::string_view key, std::string value, std::string origin);

    const std::string& value(std::string_view key) const;
    const std::string& origin(std::string_view key) const;
    bool is_default(std::string_view key) const;

    double real(std::string_view key) const;
    long long integer(std::string_view key) const;
    std::uint64_t count(std::string_view key) const;
    bool boolean(std::string_view key) const;
    std::vector<double> reals(std::string_view key) const;
    std::vector<std::uint64_t> counts(std::string_view key) const;

    /// Parses every value once so a bad entry is reported even when the
    /// experiment would not read it, and fills in per-experiment defaults.
    void finalize();

    /// "key=value" lines in key_specs() order.
    std::vector<std::string> resolved_lines() const;
    std::uint64_t hash() const;  // FNV-1a over resolved_lines joined by '\n'
    std::string hash_hex() const;

private:
    struct Entry {
        std::string value;
        std::string origin;
    };
    const Entry& entry(std::string_view key) const;
    std::map<std::string, Entry, std::less<>> entries_;
};

/// Applies `key = value` lines; '#' starts a comment. Errors name source:line.
void apply_config_text(ExperimentConfig& cfg, std::string_view text, const std::string& source);
void apply_config_file(ExperimentConfig& cfg, const std::filesystem::path& path);

struct Artifact {
    std::string name;
    std::string content;
};

struct RunOutput {
    std::vector<Artifact> files;  // CSVs, summary.json, manifest.json
    bool passed = true;
    std::vector<std::string> failures;
};

/// Runs the experiment named by the `experiment` key entirely in memory.
/// A diverging trajectory raises an Error naming the run.
RunOutput run_experiment(const ExperimentConfig& cfg);

void write_outputs(const std::filesystem::path& dir, const RunOutput& out);

/// Full command-line entry point. Exit codes: 0 all assertions pass,
/// 1 an assertion or acceptance criterion failed, 2 invalid configuration or
/// usage, 3 a run failed (blow-up or numerical error).
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ncssl::cli
