#pragma once

#include "toc/calibrate.hpp"
#include "toc/gp.hpp"

namespace toc {

struct EvalRecord {
    ArchVector a;
    int64_t f_param = 0;
    double f_acc = 0.0;
    bool feasible = false;
    double wall_s = 0.0;
};

struct SearchConfig {
    int iterations = 40;
    int init_design = 12;
    int pool = 512;
    int n_acc = 256;       // fixed evaluation tuples
    int64_t budget = 0;    // target parameter count P*, 0 = smallest feasible
    uint64_t seed = 21;
};

// The fixed (z_t, t, cond) tuples every candidate is scored on, plus the
// teacher's precomputed noise predictions.
struct AccTuples {
    std::vector<Tensor> z_t;
    std::vector<int> t;
    std::vector<Tensor> cond;  // empty unless the teacher is conditioned
    std::vector<Tensor> teacher_eps;
};

AccTuples make_acc_tuples(const UNet& teacher, const NoiseSchedule& sched,
                          const std::vector<Tensor>& calib_latents, int n, uint64_t seed);

// Mean over tuples of the per-element MSE between candidate and teacher
// noise predictions. All-base gives exactly 0 (same weights, same code).
double f_acc(const UNet& candidate, const AccTuples& tuples);

// Per-dimension variant counts for the stage libraries (4,4,4,6,4,4,4 at
// full scale); reduced spaces pass their own counts.
std::vector<int> space_dims(const std::vector<StageSpec>& specs);

std::vector<double> ordinal_encode(const ArchVector& a, const std::vector<int>& dims);

// Constrained-EI proposal over `pool` random unseen vectors: EI on raw
// f_param over the best feasible value, times PF = Phi((eps - mu)/sd) from
// the raw f_acc GP. Ties go to smaller predicted f_param, then lexicographic
// order.
ArchVector propose(const GpModel& gp_param, const GpModel& gp_acc, double eps,
                   const std::vector<int>& dims, const std::vector<EvalRecord>& history, int pool,
                   Rng& rng);

// One BO run at a fixed eps: init_design random evaluations then guided
// proposals up to `iterations` total. `evaluate` returns (f_param, f_acc).
using EvalFn = std::function<std::pair<int64_t, double>(const ArchVector&)>;

struct BoResult {
    std::vector<EvalRecord> history;
    EvalRecord best;  // minimal-f_param feasible record
    bool any_feasible = false;
};

BoResult run_bo(double eps, const SearchConfig& cfg, const std::vector<int>& dims,
                const EvalFn& evaluate, uint64_t seed);

struct SweepResult {
    std::vector<double> eps_grid;
    std::vector<BoResult> runs;
    double scale = 1.0;  // auto-scale s applied to the base grid
};

// Grid sweep per the base grid {0.001, 0.003, 0.005, 0.007} scaled by
// s = median f_acc of the first run's initial design / 0.004.
SweepResult sweep_grid(const SearchConfig& cfg, const std::vector<int>& dims,
                       const EvalFn& evaluate);

// Feasible record closest to the parameter budget; ties to smaller f_acc.
EvalRecord select_by_budget(const std::vector<EvalRecord>& records, int64_t budget);

// search_history.csv / tradeoff.csv writers.
void write_search_history(const std::string& path, const SweepResult& sweep);
void write_tradeoff(const std::string& path, const SweepResult& sweep);

}  // namespace toc
