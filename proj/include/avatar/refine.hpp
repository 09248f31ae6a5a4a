#pragma once

#include "avatar/config.hpp"
#include "avatar/error.hpp"
#include "avatar/field.hpp"
#include "avatar/losses.hpp"
#include "avatar/mesh.hpp"

#include <array>
#include <vector>

namespace avatar {

struct RefineConfig {
    int emboss_iterations = config::kEmbossIterations;
    int iterations = config::kOptimizeIterations;
    double step = config::kOptimizeStep;  // meters, applied to the largest vertex move
    int max_halvings = config::kLineSearchHalvings;
    /// (L_sdf, L_reg, L_zero, L_normal, L_area).
    std::array<double, 5> weights = config::kStage2Weights;
    bool subdivide = false;
    std::vector<double> d_max_schedule{config::kDmaxSchedule.begin(), config::kDmaxSchedule.end()};
};

void validate(const RefineConfig& config);

struct EmbossResult {
    TriangleMesh mesh;  // the input topology, or its one-time subdivision
    Positions positions;
    std::vector<int> frozen;  // vertices that left the field's domain, sorted
};

/// Moves each vertex against its angle-weighted pseudo-normal by its SDF
/// value, v ← v − s(v)·n̂(v), for the configured number of iterations.
/// Vertices where the field is undefined stop moving and are reported.
EmbossResult emboss_mesh(const TriangleMesh& mesh, const Positions& positions, const SdfField& field,
                         const RefineConfig& config = {});

struct OptimizeResult {
    Positions positions;
    std::vector<LossReport> trace;  // entry 0 is the starting point
    int iterations = 0;             // accepted steps
    bool converged = false;         // stopped before the iteration budget
};

/// Stage-2 loss of a template against a frozen field. Each term's gradient
/// w.r.t. `positions` is stored column by column (all x, then y, then z).
LossReport template_loss(const Faces& faces, const Positions& reference, const Positions& positions,
                         const SdfField& field, const std::array<double, 5>& weights);

/// Gradient descent on vertex positions with backtracking. Each step moves
/// the vertex with the largest gradient by `step`; the step is halved while
/// the weighted loss would increase. When every halving fails the loop stops
/// and reports convergence. A non-finite loss throws with the trace so far.
OptimizeResult optimize_template(const TriangleMesh& mesh, const Positions& positions, const SdfField& field,
                                 const RefineConfig& config = {});

class OptimizationError : public Error {
public:
    OptimizationError(const std::string& what, std::vector<LossReport> trace)
        : Error(what), trace_(std::move(trace))
    {}
    const std::vector<LossReport>& trace() const { return trace_; }

private:
    std::vector<LossReport> trace_;
};

}  // namespace avatar
