#include "personaforge/prompts.hpp"

#include <cstdlib>
#include <mutex>

#include "personaforge/errors.hpp"
#include "personaforge/jsonl.hpp"
#include "personaforge/text.hpp"

#ifndef PERSONAFORGE_ASSET_DIR
#define PERSONAFORGE_ASSET_DIR "assets"
#endif

namespace personaforge {

namespace {
std::string g_asset_dir;
std::mutex g_mutex;
}  // namespace

std::string asset_dir() {
    std::lock_guard<std::mutex> lk(g_mutex);
    if (!g_asset_dir.empty()) return g_asset_dir;
    if (const char* env = std::getenv("PERSONAFORGE_ASSETS")) return env;
    return PERSONAFORGE_ASSET_DIR;
}

void set_asset_dir(const std::string& dir) {
    std::lock_guard<std::mutex> lk(g_mutex);
    g_asset_dir = dir;
}

std::string asset_path(const std::string& relative) { return asset_dir() + "/" + relative; }

std::string load_prompt(const std::string& name) {
    std::string text = read_file(asset_path("prompts/" + name + ".txt"));
    // Drop leading comment lines (prompt version header).
    std::string out;
    for (const auto& line : split_lines(text)) {
        if (out.empty() && !line.empty() && line[0] == '#') continue;
        out += line;
        out += "\n";
    }
    return trim(out);
}

std::string load_prompt(const std::string& name,
                        const std::vector<std::pair<std::string, std::string>>& substitutions) {
    std::string text = load_prompt(name);
    for (const auto& [key, value] : substitutions) {
        std::string needle = "{" + key + "}";
        size_t pos = 0;
        while ((pos = text.find(needle, pos)) != std::string::npos) {
            text.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return text;
}

const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = [] {
        std::unordered_set<std::string> set;
        for (const auto& line : split_lines(read_file(asset_path("stopwords.txt")))) {
            std::string w = trim(line);
            if (!w.empty() && w[0] != '#') set.insert(to_lower(w));
        }
        return set;
    }();
    return words;
}

}  // namespace personaforge
