#pragma once

#include <filesystem>
#include <string>

#include "passivion/structure_maps.hpp"
#include "passivion/system_model.hpp"

namespace passivion {

/// JSON document with fields n, m, p, mode and row-major arrays A, B, C, D.
StateSpaceSystem parse_system(const std::string& text, bool validate = true);
StateSpaceSystem read_system(const std::filesystem::path& path, bool validate = true);
std::string system_to_json(const StateSpaceSystem& sys);

/// Scientific notation with 17 significant digits (round-trip exact).
std::string format_number(double v);
void write_system(const std::filesystem::path& path, const StateSpaceSystem& sys);

/// Initial perturbed system: a JSON document holding any subset of the
/// arrays A, B, C, D; missing blocks are taken from base.
StateSpaceSystem read_initial_system(const std::filesystem::path& path, const StateSpaceSystem& base);
StateSpaceSystem parse_initial_system(const std::string& text, const StateSpaceSystem& base);

/// Accepts "full", "gramian_c", a JSON object, or a path to a JSON file.
PerturbationStructure parse_structure(const std::string& arg, const StateSpaceSystem& sys);

/// Writes to a sibling temporary file and renames it into place.
void atomic_write(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace passivion
