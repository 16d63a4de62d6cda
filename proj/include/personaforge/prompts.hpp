#pragma once

#include <string>
#include <unordered_set>
#include <vector>

namespace personaforge {

/// Root of the shipped asset tree (prompt files, persona bank, seed pools,
/// schema, stopwords). Resolution order: explicit set_asset_dir(), then the
/// PERSONAFORGE_ASSETS environment variable, then the compiled-in source
/// location.
std::string asset_dir();
void set_asset_dir(const std::string& dir);
std::string asset_path(const std::string& relative);

/// Load a prompt asset by name (assets/prompts/<name>.txt), with simple
/// {placeholder} substitution.
std::string load_prompt(const std::string& name);
std::string load_prompt(const std::string& name,
                        const std::vector<std::pair<std::string, std::string>>& substitutions);

/// Shipped stopword list used by the pseudo-target generic filter.
const std::unordered_set<std::string>& stopwords();

}  // namespace personaforge
