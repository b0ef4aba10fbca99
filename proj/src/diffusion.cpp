#include "cdamd/diffusion.hpp"

namespace cdamd {

DiffusionMode diffusion_mode_from_string(const std::string& s) {
  if (s == "noise" || s == "ddpm") return DiffusionMode::Noise;
  if (s == "velocity" || s == "ode") return DiffusionMode::Velocity;
  throw ValidationError("unknown sampler/mode '" + s + "' (valid: ddpm, ode)");
}

std::string to_string(DiffusionMode m) {
  return m == DiffusionMode::Noise ? "noise" : "velocity";
}

}  // namespace cdamd
