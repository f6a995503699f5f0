#pragma once

#include <string>
#include <vector>

#include "hyperimage/net.hpp"

namespace hyperimage {

// Built-in network catalogue. Paper-scale entries carry the full layer
// stacks; desk-* entries are slim variants with filter counts reduced so a
// full experiment finishes on a laptop CPU.
const NetworkSpec& spec_by_name(const std::string& name);
bool spec_registered(const std::string& name);
std::vector<std::string> registered_spec_names();

}  // namespace hyperimage
