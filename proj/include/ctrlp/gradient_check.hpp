#pragma once

#include "ctrlp/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ctrlp {

// Gradient magnitudes below this are compared in absolute terms. Central
// differences carry ~1e-9 of roundoff here (conv biases feeding BN have an
// exact zero gradient), which would swamp tiny entries.
inline constexpr double kGradientFloor = 1e-4;

// |a - b| / max(|a|, |b|, kGradientFloor)
double relative_error(double analytic, double numeric);

struct GradientCheckRow {
    std::string name;
    double max_rel_error = 0;
    std::size_t checked = 0; // entries compared
    std::size_t skipped = 0; // entries whose probes straddled a ReLU/pool kink
};

struct GradientCheckReport {
    std::vector<GradientCheckRow> layers;
    double whole_model = 0; // max over every row
    bool passed(double tolerance) const { return whole_model < tolerance; }
};

struct GradientCheckOptions {
    ModelConfig config;        // usually reduced_config()
    std::size_t batch = 4;
    double relative_step = 1e-5;
    double l2_lambda = 1e-3;
    std::uint64_t seed = 1;
    bool inject_conv_fault = false;
    bool include_kernels = true; // standalone per-kernel checks (input gradients included)
};

// The default topology shrunk to input length 32 with 2/3/4 channels.
ModelConfig reduced_config();

// Central finite differences against analytic gradients, 64-bit throughout.
GradientCheckReport gradient_check(const GradientCheckOptions& options);

struct SpotCheckResult {
    double max_rel_error = 0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

// Finite-difference check of `count` randomly chosen parameter entries of an
// already-built model. Dropout masks are held fixed by reseeding.
SpotCheckResult spot_check(ModelNet<double>& model, const Tensor<double>& batch, const std::vector<double>& targets,
                  const LossConfig& loss, std::size_t count, std::uint64_t seed, double relative_step = 1e-5);

} // namespace ctrlp
