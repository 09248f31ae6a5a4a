#include "avatar/refine.hpp"

#include <algorithm>
#include <cmath>

namespace avatar {

void validate(const RefineConfig& c)
{
    if (c.iterations < 1) throw DomainError("refinement needs at least one iteration");
    if (c.emboss_iterations < 1) throw DomainError("embossing needs at least one iteration");
    if (!(c.step > 0.0)) throw DomainError("step size must be positive");
    if (c.max_halvings < 0) throw DomainError("line-search halvings cannot be negative");
    for (double w : c.weights) {
        if (!(w >= 0.0)) throw DomainError("loss weights must be non-negative");
    }
    for (double d : c.d_max_schedule) {
        if (!(d > 0.0)) throw DomainError("d_max schedule entries must be positive");
    }
}

EmbossResult emboss_mesh(const TriangleMesh& mesh, const Positions& positions, const SdfField& field,
                         const RefineConfig& config)
{
    validate(config);
    require_vertex_array(mesh, positions);
    EmbossResult out;
    out.mesh = mesh;
    out.mesh.vertices = positions;
    if (config.subdivide) out.mesh = subdivide_once(out.mesh);
    out.positions = out.mesh.vertices;

    const int n = out.mesh.vertex_count();
    std::vector<char> frozen(n, 0);
    for (int it = 0; it < config.emboss_iterations; ++it) {
        const Positions normals = angle_weighted_normals(out.mesh.faces, out.positions);
        Positions next = out.positions;
#pragma omp parallel for schedule(static)
        for (int v = 0; v < n; ++v) {
            if (frozen[v]) continue;
            const SdfSample s = sdf_eval(field, out.positions.row(v).transpose());
            if (!s.valid) {
                frozen[v] = 1;
                continue;
            }
            next.row(v) -= s.s * normals.row(v);
        }
        out.positions = std::move(next);
    }
    for (int v = 0; v < n; ++v) {
        if (frozen[v]) out.frozen.push_back(v);
    }
    out.mesh.vertices = out.positions;
    return out;
}

namespace {

Eigen::VectorXd flatten(const Positions& p) { return Eigen::Map<const Eigen::VectorXd>(p.data(), p.size()); }

}  // namespace

LossReport template_loss(const Faces& faces, const Positions& reference, const Positions& positions,
                         const SdfField& field, const std::array<double, 5>& weights)
{
    LossReport report = make_report(Stage::Two);
    const auto names = stage_weights(Stage::Two);
    for (std::size_t k = 0; k < names.size(); ++k) report.weights[names[k].first] = weights[k];

    const VertexSdfResult sdf = sdf_vertex_loss(field, positions);
    const SurfaceRegularizers reg = surface_regularizers(faces, reference, positions);
    report.values = {{"L_sdf", sdf.value}, {"L_reg", reg.reg}, {"L_zero", reg.zero}, {"L_normal", reg.normal},
                     {"L_area", reg.area}};
    report.gradients = {{"L_sdf", flatten(sdf.gradient)},
                        {"L_reg", flatten(reg.reg_gradient)},
                        {"L_zero", flatten(reg.zero_gradient)},
                        {"L_normal", flatten(reg.normal_gradient)},
                        {"L_area", flatten(reg.area_gradient)}};
    return report;
}

OptimizeResult optimize_template(const TriangleMesh& mesh, const Positions& positions, const SdfField& field,
                                 const RefineConfig& config)
{
    validate(config);
    require_vertex_array(mesh, positions);
    const Positions reference = positions;
    OptimizeResult out;
    out.positions = positions;

    LossReport current = template_loss(mesh.faces, reference, out.positions, field, config.weights);
    if (!std::isfinite(current.total())) throw OptimizationError("initial template loss is not finite", {current});
    out.trace.push_back(current);

    for (int it = 0; it < config.iterations; ++it) {
        const Eigen::VectorXd g = current.total_gradient();
        const Positions G = Eigen::Map<const Positions>(g.data(), out.positions.rows(), 3);
        const double largest = G.rowwise().norm().maxCoeff();
        if (!(largest > 0.0)) {
            out.converged = true;
            break;
        }
        double step = config.step;
        bool accepted = false;
        for (int h = 0; h <= config.max_halvings; ++h, step *= 0.5) {
            const Positions trial = out.positions - (step / largest) * G;
            LossReport next = template_loss(mesh.faces, reference, trial, field, config.weights);
            if (!std::isfinite(next.total())) {
                out.trace.push_back(next);
                throw OptimizationError("template loss became non-finite at iteration " + std::to_string(it),
                                        out.trace);
            }
            if (next.total() < current.total()) {
                out.positions = trial;
                current = std::move(next);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            out.converged = true;
            break;
        }
        out.trace.push_back(current);
        ++out.iterations;
    }
    return out;
}

}  // namespace avatar
