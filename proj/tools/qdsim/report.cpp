#include "report.hpp"

#include <fstream>

#include <fmt/format.h>

#include "qdsim/errors.hpp"

namespace qdsim::cli {

Report::Report(std::string command) : command_(std::move(command)) {}

void Report::set(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
void Report::set(const std::string& key, double value) { entries_.emplace_back(key, fmt::format("{:.9g}", value)); }
void Report::set(const std::string& key, int value) { entries_.emplace_back(key, std::to_string(value)); }
void Report::set(const std::string& key, std::size_t value) { entries_.emplace_back(key, std::to_string(value)); }
void Report::set(const std::string& key, bool value) { entries_.emplace_back(key, value ? "true" : "false"); }

std::string Report::str() const {
    std::string s = fmt::format("# qdsim {} report\nqdsim_version = {}\ncommand = {}\n", command_, QDSIM_VERSION, command_);
    for (const auto& [k, v] : entries_) s += fmt::format("{} = {}\n", k, v);
    return s;
}

void Report::write(const std::filesystem::path& path) const { write_text(path, str()); }

std::filesystem::path output_dir(const GlobalOptions& g) {
    std::filesystem::path p(g.out);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec) throw SchemaError("cannot create output directory: " + ec.message(), g.out);
    return p;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot write file", path.string());
    f << text;
}

}  // namespace qdsim::cli
