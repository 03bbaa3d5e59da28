#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uqih/fid.hpp"

namespace uqih::cli {

enum ExitCode : int { kOk = 0, kFatal = 1, kPartial = 2 };

/// Runs the command line (without the program name). Machine-readable
/// results go to stdout and files; progress and errors to stderr.
int run(const std::vector<std::string>& args);

/// Builds an embedding provider from its id ("toy-8x8" or
/// "toy-8x8-proj<d>-seed<s>").
std::unique_ptr<fid::EmbeddingProvider> make_provider(const std::string& id);

}  // namespace uqih::cli
