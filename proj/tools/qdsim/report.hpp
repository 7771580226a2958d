#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace qdsim::cli {

enum ExitCode { kOk = 0, kInputError = 1, kNotConverged = 2 };

struct GlobalOptions {
    std::string device;
    std::string out = ".";
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

// Plain key = value report, in insertion order, no timestamps.
class Report {
public:
    explicit Report(std::string command);

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, const char* value) { set(key, std::string(value)); }
    void set(const std::string& key, double value);
    void set(const std::string& key, int value);
    void set(const std::string& key, std::size_t value);
    void set(const std::string& key, bool value);

    std::string str() const;
    void write(const std::filesystem::path& path) const;

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> entries_;
};

std::filesystem::path output_dir(const GlobalOptions& g);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace qdsim::cli
