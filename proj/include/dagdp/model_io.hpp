#pragma once

#include <string>

#include "dagdp/model.hpp"

namespace dagdp {

// Versioned key-value text form of a model.  Expressions and propositions
// are rendered in prefix notation; parse(serialize(m)) reproduces the
// abstract model (and serializes back to the identical string).
std::string serialize_model(const DagdpModel& model);
DagdpModel parse_model(const std::string& text);  // throws InvalidSpec

void save_model(const DagdpModel& model, const std::string& path);
DagdpModel load_model(const std::string& path);

// Prefix-notation proposition parser, shared with the model reader.
Proposition parse_proposition(const std::string& text);

}  // namespace dagdp
