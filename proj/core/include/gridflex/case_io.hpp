#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridflex/network.hpp"

namespace gridflex {

class CaseFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loads a case file (JSON, see README for the schema), resolves all
/// cross-references and returns a fully validated-for-structure case.
/// Structural defects (missing base, dangling bus ids, no slack bus) throw
/// CaseFormatError with field context; invariant breaches are left to
/// validate_case.
NetworkCase load_case(const std::filesystem::path& path);

/// Parses a case from an in-memory JSON document.
NetworkCase parse_case(const std::string& json_text, const std::string& origin = "<string>");

/// Serializes a case back to its file form. Decimal values round-trip
/// bit-exactly for inputs with at most 9 significant digits.
std::string serialize_case(const NetworkCase& net);
void save_case(const NetworkCase& net, const std::filesystem::path& path);

struct ValidationFinding {
  std::string where;    // section/element, e.g. "generator g1"
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  bool ok() const { return findings.empty(); }
};

/// Checks every type invariant (voltage bands, impedances, tap ranges,
/// participation factors, ADN topology, stress direction) and reports all
/// violations. Never throws: findings carry the result.
ValidationReport validate_case(const NetworkCase& net);

}  // namespace gridflex
