#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "rjar/artests.hpp"
#include "rjar/dataio.hpp"

namespace rjar {

// Grid-inversion confidence set: the collection of null values the chosen
// test does not reject. Reported as a mask plus maximal accepted runs;
// AR-type sets can be disconnected or unbounded, so no interval form.
struct ConfidenceSet {
    std::vector<Eigen::VectorXd> grid; // g-tuples, caller order
    std::vector<bool> accepted;
    double level = 0.0; // 1 - alpha
    TestName test_name = TestName::Rjar;
    // Maximal runs of accepted indices, [first, last] inclusive; meaningful
    // when g = 1 and the grid is sorted.
    std::vector<std::pair<std::size_t, std::size_t>> components;
    std::vector<TestResult> results; // per grid point
};

struct InvertOptions {
    double c_bcch = 1.1;
    SupScoreScaling supscore_scaling = SupScoreScaling::ScaleConsistent;
    Eigen::Index materialize_threshold = kDefaultMaterializeThreshold;
};

// The kernel and penalty selection depend only on the instruments, so they
// are computed once by the caller and reused across every grid point.
ConfidenceSet invert(const PartialledData& pd, const RidgeKernel& kern,
                     const PenaltySelection& sel, TestName test,
                     const std::vector<Eigen::VectorXd>& grid, double alpha,
                     const InvertOptions& options = {});

// Equally spaced 1-tuples over [lo, hi]; points >= 1 (a single point sits
// at lo).
std::vector<Eigen::VectorXd> linear_grid(double lo, double hi, int points);

// Throws NotApplicableError when the named test cannot run at (r, k, n).
void check_applicable(TestName test, Eigen::Index r, Eigen::Index k,
                      Eigen::Index n);

} // namespace rjar
