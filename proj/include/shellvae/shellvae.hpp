// Umbrella header.

#pragma once

#include "shellvae/checkpoint.hpp"
#include "shellvae/clustering.hpp"
#include "shellvae/constraints.hpp"
#include "shellvae/data_io.hpp"
#include "shellvae/geometry.hpp"
#include "shellvae/matrix.hpp"
#include "shellvae/metrics.hpp"
#include "shellvae/mlp.hpp"
#include "shellvae/report_io.hpp"
#include "shellvae/rng.hpp"
#include "shellvae/spectral.hpp"
#include "shellvae/trainer.hpp"
#include "shellvae/vae.hpp"

namespace shellvae {
inline constexpr const char* kToolVersion = "0.1.0";
}
