#include "run_config.hpp"

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "crisp/errors.hpp"

namespace crisp::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string flag_name(const std::string& token) {
    if (token.rfind("--", 0) != 0) return {};
    return token.substr(2, token.find('=') == std::string::npos ? std::string::npos : token.find('=') - 2);
}

} // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config file " + path.string());
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
        }
        out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return out;
}

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    if (args.empty()) return args;
    std::string config_path;
    std::set<std::string> explicit_flags;
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string name = flag_name(args[i]);
        if (name.empty()) continue;
        explicit_flags.insert(name);
        if (name == "config") {
            const auto eq = args[i].find('=');
            if (eq != std::string::npos) {
                config_path = args[i].substr(eq + 1);
            } else if (i + 1 < args.size()) {
                config_path = args[i + 1];
            }
        }
    }
    if (config_path.empty()) return args;

    std::vector<std::string> out{args[0]};
    for (const auto& [key, value] : read_config_file(config_path)) {
        if (explicit_flags.count(key)) continue;
        out.push_back("--" + key + "=" + value);
    }
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

std::string resolved_config(const CLI::App& command) {
    std::ostringstream out;
    out << "# resolved configuration for '" << command.get_name() << "'\n";
    for (const CLI::Option* opt : command.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config" || name.empty()) continue;
        std::string value;
        if (opt->count() > 0) {
            const auto& results = opt->results();
            for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
        } else {
            value = opt->get_default_str();
        }
        if (value.empty() && opt->get_type_size() == 0) value = "false";
        if (value.empty()) continue;
        out << name << "=" << value << "\n";
    }
    return out.str();
}

StagedOutput::StagedOutput(std::filesystem::path target) : target_(std::move(target)) {
    if (target_.empty()) throw ConfigError("output directory must not be empty");
    if (target_.filename().empty()) target_ = target_.parent_path();
    staging_ = target_;
    staging_ += ".partial";
    std::error_code ec;
    std::filesystem::remove_all(staging_, ec);
    std::filesystem::create_directories(staging_, ec);
    if (ec) throw InputError("cannot create output directory " + staging_.string() + ": " + ec.message());
}

StagedOutput::~StagedOutput() {
    if (!committed_) {
        std::error_code ec;
        std::filesystem::remove_all(staging_, ec);
    }
}

void StagedOutput::commit() {
    std::error_code ec;
    std::filesystem::remove_all(target_, ec);
    if (ec) throw InputError("cannot replace " + target_.string() + ": " + ec.message());
    std::filesystem::rename(staging_, target_, ec);
    if (ec) throw InputError("cannot move outputs into " + target_.string() + ": " + ec.message());
    committed_ = true;
}

std::uint64_t fnv1a(const std::vector<std::string>& parts) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : parts) {
        for (unsigned char c : p) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        h ^= 0xff;  // part separator
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace crisp::cli
