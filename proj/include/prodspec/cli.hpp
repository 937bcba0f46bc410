#pragma once

#include <cstdint>
#include <string>

#include "prodspec/mc.hpp"

namespace prodspec {

inline constexpr const char* kArtifactName = "prodspec";
inline constexpr const char* kArtifactVersion = "0.1.0";

struct RunConfig {
    std::string command;    // theory | mc | compare | fit-erfc | oracle
    std::string model_path;
    std::string out_dir;
    std::uint64_t seed = 1;
    int n_outer = 512;
    int samples = 40;
    int workers = 0;        // 0 = available parallelism
    int bins = 64;
    std::string grid_spec;  // empty = default policy
    EntryDist entries = EntryDist::Gaussian;
    bool save_spectra = false;
};

// Executes one subcommand, writing CSV outputs plus a manifest into
// cfg.out_dir. Throws prodspec::Error on failure (the CLI entry point turns
// that into a machine-readable diagnostic and a nonzero exit).
void run(const RunConfig& cfg);

// Full command-line entry point (flag parsing, diagnostics, exit code).
int cli_main(int argc, char** argv);

// FNV-1a 64 over a byte range / a file's contents (manifest content hashes).
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);

} // namespace prodspec
