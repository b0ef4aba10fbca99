#pragma once

#include <optional>
#include <string>
#include <utility>

#include "cdamd/codec.hpp"
#include "cdamd/generator.hpp"
#include "cdamd/motion.hpp"

namespace cdamd {

enum class EditTask { None, Inpaint, Outpaint, Prefix, Suffix };

EditTask edit_task_from_string(const std::string& s);
std::string to_string(EditTask t);

// Binary plan over latent positions: 1 = generate, 0 = keep as condition.
struct EditMask {
  FlagVector generate;
  EditTask task = EditTask::None;

  int length() const { return static_cast<int>(generate.size()); }

  void validate() const {
    if (length() < 1) throw ValidationError("edit mask: empty");
    if ((generate.array() != 0).count() == 0)
      throw ValidationError("edit mask: needs at least one generate position");
    if (task == EditTask::None && (generate.array() == 0).count() != 0)
      throw ValidationError("edit mask: task none must generate every position");
  }
};

// inpaint regenerates the middle half given both ends; outpaint the reverse;
// prefix conditions the first half; suffix mirrors prefix.
EditMask build_edit_mask(EditTask task, int l);

struct GenerationRequest {
  std::string prompt;
  int target_frames = 64;
  std::optional<std::pair<MotionSequence, EditMask>> edit;
  DiffusionMode sampler = DiffusionMode::Velocity;
  int steps = 50;
  std::uint64_t seed = 0;
  int chunk_size = 1;
  bool literal_ode_sign = false;
};

// Frozen model bundle for inference.
struct GenerationModels {
  AutoEncoder<float>* ae = nullptr;
  Generator<float>* generator = nullptr;
  MotionStats stats;
  MaskKind mask_kind = MaskKind::DCCM;
};

// The latent canvas after all generate positions are filled, plus metadata
// used by the editing contracts.
struct GenerationLatents {
  MatF latents;        // l x d
  FlagVector generate; // the applied mask
  MatF source_latents; // encoded edit source (empty when task = none)
};

GenerationLatents generate_latents(const GenerationRequest& req, GenerationModels& models);

// Full pipeline: progressive left-to-right latent filling under the
// configured mask, diffusion refinement per position, AE decode.
MotionSequence generate(const GenerationRequest& req, GenerationModels& models);

MotionSequence edit(const MotionSequence& source, EditTask task, const std::string& prompt,
                    GenerationModels& models, DiffusionMode sampler = DiffusionMode::Velocity,
                    int steps = 50, std::uint64_t seed = 0);

}  // namespace cdamd
