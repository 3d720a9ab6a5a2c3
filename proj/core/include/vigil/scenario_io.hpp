#pragma once

#include <string>

#include "vigil/model.hpp"

namespace vigil {

/// Parses and validates a scenario file.
///
/// Errors: ParseError (not JSON), SchemaError (missing/mistyped field),
/// ValidationError (bad cross-reference or invariant, message carries the
/// offending field path).
Scenario load_scenario(const std::string& path);

/// Serializes with canonical key ordering and canonical in-array ordering so
/// that save -> load -> save is byte-identical.
void save_scenario(const Scenario& sc, const std::string& path);
std::string scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const std::string& text, const std::string& origin = "<string>");

/// FNV-1a content hash of a file, as a fixed-width hex string.  Used by run
/// manifests and checkpoints to pin results to exact scenario content.
std::string file_content_hash(const std::string& path);
std::string string_content_hash(const std::string& text);

}  // namespace vigil
