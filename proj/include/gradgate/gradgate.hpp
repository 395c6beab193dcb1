#pragma once

// Umbrella header for the gradgate library: a saliency-disagreement audit
// for binary defect classifiers. Negative predictions whose class-specific
// explanations disagree with the class-agnostic one (delta-IoU above the
// gate threshold) are flagged as suspicious instead of being trusted.

#include "gradgate/adversarial.hpp"
#include "gradgate/autodiff.hpp"
#include "gradgate/explain.hpp"
#include "gradgate/gate.hpp"
#include "gradgate/model.hpp"
#include "gradgate/pgm.hpp"
#include "gradgate/pipeline.hpp"
#include "gradgate/rng.hpp"
#include "gradgate/synth.hpp"
#include "gradgate/tensor.hpp"
#include "gradgate/trainer.hpp"
#include "gradgate/weights_io.hpp"
