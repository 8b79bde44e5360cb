#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace CLI {
class App;
}

namespace crisp::cli {

/// key=value lines; blank lines and '#' comments are skipped.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

/// Expands `--config FILE` for the subcommand at args[0]: every key=value
/// in FILE becomes `--key=value` unless the same flag is given explicitly.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

/// Every option of `command` (except help and config) as key=value lines,
/// using the parsed value or the default. Feeding the text back through
/// --config reproduces the run.
std::string resolved_config(const CLI::App& command);

/// Output directory that only appears once the run succeeded. Files go to a
/// sibling staging directory; commit() swaps it into place, and destruction
/// without commit removes it.
class StagedOutput {
public:
    explicit StagedOutput(std::filesystem::path target);
    ~StagedOutput();
    StagedOutput(const StagedOutput&) = delete;
    StagedOutput& operator=(const StagedOutput&) = delete;

    const std::filesystem::path& dir() const noexcept { return staging_; }
    std::filesystem::path file(const std::string& name) const { return staging_ / name; }
    void commit();

private:
    std::filesystem::path target_;
    std::filesystem::path staging_;
    bool committed_ = false;
};

/// 64-bit FNV-1a over several byte strings.
std::uint64_t fnv1a(const std::vector<std::string>& parts);

} // namespace crisp::cli
