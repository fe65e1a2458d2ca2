#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "diffnet/multigrid.hpp"
#include "diffnet/random.hpp"
#include "oracles.hpp"

using namespace diffnet;

namespace {

/// Diagonal SPD test system; coarsening keeps every other entry.
class DiagonalSystem {
public:
    DiagonalSystem(std::vector<double> d, double h) : d_(std::move(d)), h_(h) {}
    std::size_t size() const { return d_.size(); }
    double h() const { return h_; }
    const std::vector<double>& diagonal() const { return d_; }
    std::vector<double> apply(std::span<const double> x) const {
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = d_[i] * x[i];
        return y;
    }
    DiagonalSystem coarsened() const {
        std::vector<double> c;
        for (std::size_t i = 0; i < d_.size(); i += 2) c.push_back(d_[i]);
        return DiagonalSystem(std::move(c), 2.0 * h_);
    }

private:
    std::vector<double> d_;
    double h_;
};

static_assert(SpdSystem<DiagonalSystem>);
static_assert(SpdSystem<DiffusionSystem>);

double max_abs_diff(const Signal& a, const Signal& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void expect_residual_channel(const DiffusionSystem& a, const UNetState& s) {
    const Signal r = residual(a, s.b, s.x);
    EXPECT_LE(distance(r, s.r), 1e-12 * std::max(1.0, l2_norm(s.b)));
}

/// The reduction measurement of measure_reduction replayed on the dense
/// error-propagation matrix M: x <- M x, factor = ||A x_new|| / ||A x_old||.
std::vector<double> dense_reduction_factors(const oracle::MatrixXd& a, const oracle::MatrixXd& m, std::size_t cycles,
                                            std::uint64_t seed) {
    Rng rng(seed);
    oracle::VectorXd x = oracle::to_eigen(rng.normal_vector(static_cast<std::size_t>(a.rows())));
    double rn = (a * x).norm();
    std::vector<double> out;
    for (std::size_t c = 0; c < cycles; ++c) {
        x = m * x;
        const double next = (a * x).norm();
        out.push_back(next / rn);
        x /= next;
        rn = 1.0;
    }
    return out;
}

}  // namespace

TEST(Smoother, DiagonalSystemExact) {
    const DiagonalSystem a({2.0, 2.0, 2.0, 2.0}, 1.0);
    const Signal b({2.0, 4.0, -2.0, 0.0});
    const auto s = smoother(a, b, Signal::constant(4, 0.0), 1, 1.0);
    EXPECT_EQ(s.x, Signal({1.0, 2.0, -1.0, 0.0}));
    EXPECT_EQ(l2_norm(s.r), 0.0);
    const auto damped = smoother(a, b, Signal::constant(4, 0.0), 1, 0.5);
    EXPECT_EQ(damped.x, Signal({0.5, 1.0, -0.5, 0.0}));
}

TEST(Smoother, MatchesDenseJacobi) {
    Rng rng(8);
    const std::size_t n = 8;
    const auto a = DiffusionSystem::forward_difference(n, 1.0, 3.0);
    const Signal b(rng.uniform_vector(n, -1, 1));
    const Signal x0(rng.uniform_vector(n, -1, 1));
    const auto s = smoother(a, b, x0, 3, 2.0 / 3.0);
    const oracle::MatrixXd ad = oracle::diffusion_system_matrix(n, 1.0, 3.0);
    const oracle::VectorXd dinv = ad.diagonal().cwiseInverse();
    oracle::VectorXd x = oracle::to_eigen(x0.values());
    const oracle::VectorXd be = oracle::to_eigen(b.values());
    for (int i = 0; i < 3; ++i) x += (2.0 / 3.0) * dinv.asDiagonal() * (be - ad * x);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(s.x[i], x(static_cast<Eigen::Index>(i)), 1e-13);
    expect_residual_channel(a, s);
}

TEST(Smoother, Errors) {
    const DiagonalSystem singular({1.0, 0.0, 1.0}, 1.0);
    EXPECT_THROW(smoother(singular, Signal::constant(3, 1.0), Signal::constant(3, 0.0), 1, 0.5), SingularityError);
    const auto a = DiffusionSystem::forward_difference(5, 1.0, 1.0);
    EXPECT_THROW(smoother(a, Signal::constant(4, 1.0), Signal::constant(5, 0.0), 1, 0.5), SizeError);
}

TEST(DiffusionSystem, MatchesDenseMatrixAndDiagonal) {
    Rng rng(4);
    const auto a = DiffusionSystem::forward_difference(17, 0.5, 2.0);
    const oracle::MatrixXd ad = oracle::diffusion_system_matrix(17, 0.5, 2.0);
    const auto x = rng.uniform_vector(17, -1, 1);
    const auto y = a.apply(x);
    const oracle::VectorXd ref = ad * oracle::to_eigen(x);
    for (Eigen::Index i = 0; i < 17; ++i) {
        EXPECT_NEAR(y[static_cast<std::size_t>(i)], ref(i), 1e-13);
        EXPECT_NEAR(a.diagonal()[static_cast<std::size_t>(i)], ad(i, i), 1e-14);
    }
    const auto c = a.coarsened();
    EXPECT_EQ(c.size(), 9u);
    EXPECT_EQ(c.h(), 1.0);
    EXPECT_THROW(DiffusionSystem::forward_difference(8, 1.0, -1.0), ParameterError);
}

TEST(GridTransfer, Examples) {
    EXPECT_EQ(restriction(Signal({0, 1, 0, 1, 0})), Signal({0.5, 0.5, 0.5}, 2.0));
    EXPECT_EQ(prolongation(Signal({0.0, 1.0, 4.0})), Signal({0.0, 0.5, 1.0, 2.5, 4.0}, 0.5));
    for (std::size_t nc : {2u, 3u, 9u}) {
        const auto c = Signal::constant(2 * nc - 1, 2.5);
        EXPECT_EQ(restriction(c), Signal::constant(nc, 2.5, 2.0));
        EXPECT_EQ(prolongation(Signal::constant(nc, -1.0)), Signal::constant(2 * nc - 1, -1.0, 0.5));
    }
    EXPECT_THROW(restriction(Signal::constant(6, 1.0)), SizeError);
    EXPECT_THROW(restriction(Signal::constant(2, 1.0)), SizeError);
    EXPECT_EQ(coarse_size(65), 33u);
}

TEST(GridTransfer, MatchesDenseMatricesAndAdjointOnInterior) {
    Rng rng(11);
    for (Eigen::Index nc : {2, 3, 5, 17, 33}) {
        const Eigen::Index nf = 2 * nc - 1;
        const oracle::MatrixXd r = oracle::restriction_matrix(nc);
        const oracle::MatrixXd p = oracle::prolongation_matrix(nc);
        const auto v = rng.uniform_vector(static_cast<std::size_t>(nf), -1, 1);
        const auto w = rng.uniform_vector(static_cast<std::size_t>(nc), -1, 1);
        const Signal rv = restriction(Signal(v));
        const Signal pw = prolongation(Signal(w));
        const oracle::VectorXd rv_ref = r * oracle::to_eigen(v);
        const oracle::VectorXd pw_ref = p * oracle::to_eigen(w);
        for (Eigen::Index i = 0; i < nc; ++i) EXPECT_NEAR(rv[static_cast<std::size_t>(i)], rv_ref(i), 1e-15);
        for (Eigen::Index i = 0; i < nf; ++i) EXPECT_NEAR(pw[static_cast<std::size_t>(i)], pw_ref(i), 1e-15);
        // <R v, w> = 1/2 <v, P w> for w vanishing on the two end nodes
        std::vector<double> wi = w;
        wi.front() = 0.0;
        wi.back() = 0.0;
        const double lhs = dot(rv.values(), wi);
        const double rhs = 0.5 * dot(v, prolongation(Signal(wi)).values());
        EXPECT_NEAR(lhs, rhs, 1e-14);
        if (nc > 2) {
            const oracle::MatrixXd diff = p - 2.0 * r.transpose();
            EXPECT_LE(diff.middleCols(1, nc - 2).cwiseAbs().maxCoeff(), 1e-15);
        }
    }
}

TEST(TwoGrid, ZeroRhsStaysZero) {
    const auto a = DiffusionSystem::forward_difference(33, 1.0, 10.0);
    const LinearProblem p(a, Signal::constant(33, 0.0));
    const CycleConfig cfg;
    for (const auto& s : {two_grid_cycle(p, Signal::constant(33, 0.0), cfg),
                          unet_form_cycle(p, Signal::constant(33, 0.0), cfg)}) {
        EXPECT_EQ(l2_norm(s.x), 0.0);
        EXPECT_EQ(l2_norm(s.b), 0.0);
        EXPECT_EQ(l2_norm(s.r), 0.0);
    }
}

TEST(TwoGrid, ExactSmootherMakesCycleIdentity) {
    Rng rng(12);
    const DiagonalSystem a(rng.uniform_vector(17, 1.0, 3.0), 1.0);
    const Signal b(rng.uniform_vector(17, -1, 1));
    CycleConfig cfg;
    cfg.omega = 1.0;
    cfg.pre_smooth = 1;
    cfg.post_smooth = 0;
    const LinearProblem p(a, b);
    const auto pre = smoother(a, b, Signal::constant(17, 0.0), 1, 1.0);
    const auto out = two_grid_cycle(p, Signal::constant(17, 0.0), cfg);
    // the pre-smoother leaves only a roundoff residual, so the coarse
    // correction is at roundoff level too
    EXPECT_LE(max_abs_diff(out.x, pre.x), 1e-15);
    EXPECT_LE(l2_norm(out.r), 1e-15);
}

TEST(TwoGrid, UNetFormIsIdentical) {
    Rng rng(100);
    for (int trial = 0; trial < 100; ++trial) {
        const double tau = rng.uniform(0.1, 20.0);
        const auto a = DiffusionSystem::forward_difference(33, 1.0, tau);
        const LinearProblem p(a, Signal(rng.uniform_vector(33, -1, 1)));
        const Signal x0(rng.uniform_vector(33, -1, 1));
        CycleConfig cfg;
        cfg.pre_smooth = rng.index(0, 3);
        cfg.post_smooth = rng.index(0, 3);
        if (trial % 3 == 0) cfg.coarse_solver = CoarseSolver::smoother_only;
        const auto classic = two_grid_cycle(p, x0, cfg);
        const auto unet = unet_form_cycle(p, x0, cfg);
        EXPECT_LE(max_abs_diff(classic.x, unet.x), 1e-14);
        EXPECT_LE(max_abs_diff(classic.r, unet.r), 1e-14);
        EXPECT_EQ(classic.b, unet.b);
        expect_residual_channel(a, classic);
        expect_residual_channel(a, unet);
    }
}

TEST(TwoGrid, ChannelTransfersRouteOnlyTheirChannel) {
    Rng rng(13);
    const UNetState s{Signal(rng.uniform_vector(9, -1, 1)), Signal(rng.uniform_vector(9, -1, 1)),
                      Signal(rng.uniform_vector(9, -1, 1))};
    const auto down = downsampling_transfer(9, 1.0)(s);
    EXPECT_EQ(l2_norm(down.x), 0.0);
    EXPECT_EQ(down.b, restriction(s.r));
    EXPECT_EQ(l2_norm(down.r), 0.0);
    const auto up = upsampling_transfer(5, 2.0)(down);
    EXPECT_EQ(l2_norm(up.x), 0.0);
    EXPECT_EQ(l2_norm(up.b), 0.0);
    EXPECT_EQ(up.x.size(), 9u);
}

TEST(TwoGrid, FactorMatchesDenseIterationMatrix) {
    const std::size_t n = 33;
    const double tau = 10.0;
    const auto a = DiffusionSystem::forward_difference(n, 1.0, tau);
    const CycleConfig cfg;
    std::vector<double> factors;
    vcycle_reduction(a, cfg, 30, 7, &factors);
    const oracle::MatrixXd ad = oracle::diffusion_system_matrix(n, 1.0, tau);
    const oracle::MatrixXd m = oracle::two_grid_iteration_matrix(n, 1.0, tau, 2, 2, 2.0 / 3.0);
    const auto ref = dense_reduction_factors(ad, m, 30, 7);
    ASSERT_EQ(factors.size(), ref.size());
    for (std::size_t c = 0; c < ref.size(); ++c) EXPECT_NEAR(factors[c], ref[c], 1e-10) << "cycle " << c;
    EXPECT_LT(oracle::spectral_radius(m), 1.0);
}

TEST(TwoGrid, ContractsUniformlyAcrossGridSizes) {
    const CycleConfig cfg;
    std::vector<double> rhos;
    for (std::size_t n : {33u, 65u, 129u, 257u}) {
        const double rho = vcycle_reduction(DiffusionSystem::forward_difference(n, 1.0, 10.0), cfg);
        EXPECT_LT(rho, 1.0) << "N=" << n;
        rhos.push_back(rho);
    }
    const auto [lo, hi] = std::minmax_element(rhos.begin(), rhos.end());
    EXPECT_LE((*hi - *lo) / *lo, 0.2);
}

TEST(TwoGrid, BeatsJacobiByFactorFive) {
    const auto a = DiffusionSystem::forward_difference(129, 1.0, 10.0);
    const CycleConfig cfg;
    const double mg = vcycle_reduction(a, cfg);
    const double jac = jacobi_reduction(a, cfg.pre_smooth + cfg.post_smooth, cfg.omega);
    EXPECT_GT(jac, 0.5);
    EXPECT_GE(jac / mg, 5.0);
}

TEST(VCycle, TwoLevelsEqualsTwoGrid) {
    Rng rng(14);
    const auto a = DiffusionSystem::forward_difference(65, 1.0, 4.0);
    const LinearProblem p(a, Signal(rng.uniform_vector(65, -1, 1)));
    const Signal x0(rng.uniform_vector(65, -1, 1));
    const CycleConfig cfg;
    EXPECT_EQ(v_cycle(p, x0, cfg).x, two_grid_cycle(p, x0, cfg).x);
}

TEST(VCycle, ThreeLevelsConvergeToDenseSolution) {
    Rng rng(15);
    const std::size_t n = 65;
    const auto a = DiffusionSystem::forward_difference(n, 1.0, 10.0);
    const Signal b(rng.uniform_vector(n, -1, 1));
    CycleConfig cfg;
    cfg.levels = 3;
    const auto run = solve_multigrid(LinearProblem(a, b), Signal::constant(n, 0.0), cfg, 30, 1e-12);
    EXPECT_LT(run.history.size(), 31u);
    EXPECT_LE(run.history.back().residual_norm, 1e-12 * l2_norm(b));
    const oracle::VectorXd ref = oracle::diffusion_system_matrix(n, 1.0, 10.0).ldlt().solve(oracle::to_eigen(b.values()));
    EXPECT_LE((oracle::to_eigen(run.final_state.x.values()) - ref).norm(), 1e-10 * ref.norm());
    for (std::size_t c = 1; c < run.history.size(); ++c) EXPECT_LT(run.history[c].reduction_factor, 1.0);
    expect_residual_channel(a, run.final_state);
}

TEST(VCycle, ConstantRhsIsHandled) {
    const auto a = DiffusionSystem::forward_difference(33, 1.0, 10.0);
    CycleConfig cfg;
    cfg.levels = 4;
    const auto run = solve_multigrid(LinearProblem(a, Signal::constant(33, 3.0)), Signal::constant(33, 0.0), cfg, 50,
                                     1e-13);
    EXPECT_LE(max_abs_diff(run.final_state.x, Signal::constant(33, 3.0)), 1e-12);
}

TEST(VCycle, Errors) {
    const auto a = DiffusionSystem::forward_difference(33, 1.0, 1.0);
    const LinearProblem p(a, Signal::constant(33, 1.0));
    CycleConfig cfg;
    cfg.levels = 6;  // 33 -> 17 -> 9 -> 5 -> 3 -> 2
    EXPECT_NO_THROW(v_cycle(p, Signal::constant(33, 0.0), cfg));
    cfg.levels = 7;
    EXPECT_THROW(v_cycle(p, Signal::constant(33, 0.0), cfg), SizeError);
    EXPECT_THROW(two_grid_cycle(p, Signal::constant(33, 0.0), cfg), ParameterError);
    cfg.levels = 2;
    cfg.omega = 0.0;
    EXPECT_THROW(v_cycle(p, Signal::constant(33, 0.0), cfg), ParameterError);
    const LinearProblem even(DiffusionSystem::forward_difference(32, 1.0, 1.0), Signal::constant(32, 1.0));
    EXPECT_THROW(two_grid_cycle(even, Signal::constant(32, 0.0), CycleConfig{}), SizeError);
    EXPECT_THROW(LinearProblem(a, Signal::constant(5, 1.0)), SizeError);
}

TEST(MultigridRun, CsvLayout) {
    const auto a = DiffusionSystem::forward_difference(9, 1.0, 1.0);
    const auto run = solve_multigrid(LinearProblem(a, Signal::constant(9, 1.0)), Signal::constant(9, 0.0),
                                     CycleConfig{}, 2, 0.0);
    std::ostringstream out;
    run.write_csv(out);
    const std::string s = out.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "cycle,residual_norm,reduction_factor");
    EXPECT_NE(s.find("\n0,3,\n"), std::string::npos);
    EXPECT_EQ(run.history.size(), 3u);
}
