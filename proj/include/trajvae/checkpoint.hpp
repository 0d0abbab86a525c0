#pragma once

#include <string>

#include "trajvae/model.hpp"

namespace trajvae {

// Binary container: magic + JSON header {format_version, model_config, seed}
// followed by the named flat parameter arrays in IEEE-754 double.
// save -> load -> save round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace trajvae
