#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "irsce/errors.hpp"
#include "irsce/federation.hpp"

using namespace irsce;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SystemGeometry micro_geometry(int users) {
    SystemGeometry g;
    g.bs_antennas = 4;
    g.irs_elements = 2;
    g.users = users;
    g.paths_bs_irs = 2;
    g.paths_bs_user = 2;
    g.paths_irs_user = 2;
    return g;
}

NetworkSpec micro_spec(const DatasetMeta& meta) {
    NetworkSpec spec = NetworkSpec::for_dataset(meta);
    spec.conv_layers = 1;
    spec.conv_filters = 4;
    spec.fc_units = 8;
    return spec;
}

Dataset micro_dataset(int users, int realizations, std::uint64_t seed) {
    return generate_dataset(micro_geometry(users), 2, IrsSwitchModel{}, {10.0}, realizations, 1,
                            seed);
}

TrainConfig micro_train(TrainMode mode, int rounds, std::uint64_t seed) {
    TrainConfig tc;
    tc.mode = mode;
    tc.rounds = rounds;
    tc.learning_rate = 1e-5;
    tc.momentum = 0.0;
    tc.batch_size = 1 << 20;  // single batch
    tc.gradient_snr_db = kInf;
    tc.downlink_noise = true;
    tc.dropout = false;
    tc.threads = 1;
    tc.seed = seed;
    return tc;
}

} // namespace

TEST_SUITE_BEGIN("federation");

TEST_CASE("dataset split holds out the last fifth per user") {
    const Dataset ds = micro_dataset(2, 10, 5);
    const auto splits = split_dataset(ds);
    REQUIRE(splits.size() == 2);
    for (const auto& s : splits) {
        CHECK(s.train.size() == 8);
        CHECK(s.val.size() == 2);
    }
    // validation samples are the trailing ones of each user's block
    const auto [b0, e0] = ds.user_range(0);
    CHECK(splits[0].val[0] == &ds.samples[e0 - 2]);
    CHECK(splits[0].val[1] == &ds.samples[e0 - 1]);
}

TEST_CASE("local gradient mean rules") {
    const Dataset ds = micro_dataset(1, 6, 7);
    const Network net(micro_spec(ds.meta));
    RandomStream rng(3);
    const Vector theta = net.init_parameters(rng);
    std::vector<const TrainingSample*> local;
    for (const auto& s : ds.samples) local.push_back(&s);

    SUBCASE("batch of one equals that sample's gradient") {
        const Vector g = local_gradient(net, theta, local, {2}, nullptr);
        const Vector direct = net.backward(theta, *local[2], nullptr).gradient;
        CHECK((g - direct).norm() == 0.0);
    }
    SUBCASE("mean of equal halves equals the full-set gradient") {
        const Vector full = local_gradient(net, theta, local, {0, 1, 2, 3, 4, 5}, nullptr);
        const Vector first = local_gradient(net, theta, local, {0, 1, 2}, nullptr);
        const Vector second = local_gradient(net, theta, local, {3, 4, 5}, nullptr);
        const Vector mean = 0.5 * (first + second);
        CHECK((full - mean).norm() <= 1e-10 * std::max(1.0, full.norm()));
    }
    SUBCASE("duplicating a sample does not move the mean") {
        const Vector once = local_gradient(net, theta, local, {1}, nullptr);
        const Vector twice = local_gradient(net, theta, local, {1, 1}, nullptr);
        CHECK((once - twice).norm() <= 1e-12 * std::max(1.0, once.norm()));
    }
    SUBCASE("empty batch is rejected") {
        CHECK_THROWS_AS(local_gradient(net, theta, local, {}, nullptr), std::invalid_argument);
    }
}

TEST_CASE("gradient uplink noise calibration") {
    RandomStream rng(11);
    SUBCASE("infinite SNR passes through untouched") {
        Vector g(3);
        g << 1.0, -2.0, 0.5;
        const Vector out = noisy_uplink(g, kInf, rng);
        CHECK((out.array() == g.array()).all());
    }
    SUBCASE("unit-norm gradient at 0 dB has unit noise variance") {
        const int dim = 10000;
        Vector g = Vector::Zero(dim);
        g[0] = 1.0;  // ||g||^2 = 1
        const Vector out = noisy_uplink(g, 0.0, rng);
        const double var = (out - g).squaredNorm() / dim;
        CHECK(std::abs(var - 1.0) < 0.05);
    }
    SUBCASE("norm 100 at 40 dB also gives unit variance") {
        const int dim = 10000;
        Vector g = Vector::Constant(dim, 0.1);  // ||g||^2 = 100
        const Vector out = noisy_uplink(g, 40.0, rng);
        const double var = (out - g).squaredNorm() / dim;
        CHECK(std::abs(var - 1.0) < 0.05);
    }
    SUBCASE("zero-norm gradient with finite SNR is degenerate") {
        CHECK_THROWS_AS(noisy_uplink(Vector::Zero(4), 10.0, rng), DegenerateSignalError);
    }
    SUBCASE("downlink is reproducible given a fixed stream") {
        Vector theta(5);
        theta << 1, 2, 3, 4, 5;
        RandomStream a = RandomStream::substream(9, {1}), b = RandomStream::substream(9, {1});
        const Vector x = noisy_downlink(theta, 10.0, a);
        const Vector y = noisy_downlink(theta, 10.0, b);
        CHECK((x.array() == y.array()).all());
        CHECK((x - theta).norm() > 0.0);
    }
}

TEST_CASE("uplink noises across users are uncorrelated") {
    const int dim = 10000;
    Vector g = Vector::Constant(dim, 0.01);
    RandomStream r1 = RandomStream::substream(9, {0x04, 1, 0});
    RandomStream r2 = RandomStream::substream(9, {0x04, 1, 1});
    const Vector e1 = noisy_uplink(g, 20.0, r1) - g;
    const Vector e2 = noisy_uplink(g, 20.0, r2) - g;
    const double corr = e1.dot(e2) / (e1.norm() * e2.norm());
    CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("aggregation is the unweighted user mean") {
    SUBCASE("single user identity") {
        Vector g(2);
        g << 1, 2;
        const Vector out = aggregate({g});
        CHECK((out.array() == g.array()).all());
    }
    SUBCASE("opposite gradients cancel") {
        Vector g(3);
        g << 1, -2, 3;
        CHECK(aggregate({g, -g}).norm() == 0.0);
    }
    SUBCASE("three random gradients against a direct mean") {
        RandomStream rng(21);
        std::vector<Vector> gs(3, Vector(4));
        for (auto& g : gs)
            for (int i = 0; i < 4; ++i) g[i] = rng.uniform(-1, 1);
        const Vector out = aggregate(gs);
        for (int i = 0; i < 4; ++i)
            CHECK(out[i] == doctest::Approx((gs[0][i] + gs[1][i] + gs[2][i]) / 3.0).epsilon(1e-15));
    }
    SUBCASE("length mismatch rejected") {
        CHECK_THROWS_AS(aggregate({Vector::Zero(2), Vector::Zero(3)}), std::invalid_argument);
    }
}

TEST_CASE("federated run basics") {
    const Dataset ds = micro_dataset(2, 10, 31);
    const NetworkSpec spec = micro_spec(ds.meta);
    SUBCASE("zero rounds rejected, one round gives one record") {
        TrainConfig tc = micro_train(TrainMode::federated, 1, 4);
        tc.rounds = 0;
        CHECK_THROWS_AS(run_federated(ds, spec, tc), std::invalid_argument);
        tc.rounds = 1;
        const TrainResult r = run_federated(ds, spec, tc);
        CHECK(r.rounds.size() == 1);
        CHECK(r.rounds[0].round == 1);
    }
    SUBCASE("different seeds give different masks, logged per round") {
        TrainConfig tc = micro_train(TrainMode::federated, 2, 5);
        tc.dropout = true;
        const TrainResult a = run_federated(ds, spec, tc);
        tc.seed = 6;
        const TrainResult b = run_federated(ds, spec, tc);
        CHECK(a.rounds[0].mask_active);
        CHECK(a.rounds[0].mask_seed != b.rounds[0].mask_seed);
        CHECK(a.rounds[0].mask_seed != a.rounds[1].mask_seed);
    }
    SUBCASE("protocol determinism across thread counts") {
        TrainConfig tc = micro_train(TrainMode::federated, 3, 8);
        tc.gradient_snr_db = 80.0;
        tc.dropout = true;
        const TrainResult a = run_federated(ds, spec, tc);
        tc.threads = 4;
        const TrainResult b = run_federated(ds, spec, tc);
        CHECK((a.theta.array() == b.theta.array()).all());
        for (std::size_t i = 0; i < a.rounds.size(); ++i) {
            CHECK(a.rounds[i].loss == b.rounds[i].loss);
            CHECK(a.rounds[i].val_rmse == b.rounds[i].val_rmse);
        }
    }
}

TEST_CASE("single-user noiseless FL reproduces centralized gradient descent") {
    const Dataset ds = micro_dataset(1, 10, 77);
    const NetworkSpec spec = micro_spec(ds.meta);
    // trajectory comparison: prefix-stability makes run(T=t) the t-th iterate
    for (int t : {1, 4, 10}) {
        TrainConfig fl = micro_train(TrainMode::federated, t, 13);
        fl.mode = TrainMode::federated;
        TrainConfig cl = micro_train(TrainMode::centralized, t, 13);
        const TrainResult rf = run_federated(ds, spec, fl);
        const TrainResult rc = run_centralized(ds, spec, cl);
        REQUIRE(rf.theta.size() == rc.theta.size());
        CHECK((rf.theta - rc.theta).cwiseAbs().maxCoeff() <= 1e-6);
        for (std::size_t i = 0; i < rf.rounds.size(); ++i) {
            CHECK(rf.rounds[i].loss ==
                  doctest::Approx(rc.rounds[i].loss).epsilon(1e-9));
            CHECK(rf.rounds[i].val_rmse ==
                  doctest::Approx(rc.rounds[i].val_rmse).epsilon(1e-9));
        }
    }
}

TEST_CASE("centralized run basics") {
    const Dataset ds = micro_dataset(2, 10, 41);
    const NetworkSpec spec = micro_spec(ds.meta);
    SUBCASE("single batch containing everything is a plain GD step") {
        TrainConfig tc = micro_train(TrainMode::centralized, 1, 3);
        const TrainResult r = run_centralized(ds, spec, tc);
        // independent recomputation of theta0 - eta * g(theta0)
        Network net(spec);
        RandomStream init = RandomStream::substream(3, {0x01});
        const Vector theta0 = net.init_parameters(init);
        const auto splits = split_dataset(ds);
        std::vector<const TrainingSample*> pooled;
        for (const auto& s : splits) pooled.insert(pooled.end(), s.train.begin(), s.train.end());
        net.calibrate_normalization(theta0, pooled);
        const BatchGradient bg = batch_gradient(net, theta0, pooled, nullptr, 1);
        const Vector want = theta0 - tc.learning_rate * bg.gradient;
        CHECK((r.theta - want).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(r.rounds[0].loss == doctest::Approx(bg.loss).epsilon(1e-12));
    }
    SUBCASE("zero learning rate leaves parameters at the initialization") {
        TrainConfig tc = micro_train(TrainMode::centralized, 3, 3);
        tc.learning_rate = 0.0;
        tc.batch_size = 4;
        tc.dropout = true;
        const TrainResult r = run_centralized(ds, spec, tc);
        const Network net(spec);
        RandomStream init = RandomStream::substream(3, {0x01});
        const Vector theta0 = net.init_parameters(init);
        CHECK((r.theta.array() == theta0.array()).all());
    }
    SUBCASE("mode mismatch rejected") {
        TrainConfig tc = micro_train(TrainMode::federated, 1, 3);
        CHECK_THROWS_AS(run_centralized(ds, spec, tc), std::invalid_argument);
        TrainConfig tc2 = micro_train(TrainMode::centralized, 1, 3);
        CHECK_THROWS_AS(run_federated(ds, spec, tc2), std::invalid_argument);
    }
}

TEST_CASE("aggregating per-user full gradients equals the pooled gradient") {
    const Dataset ds = micro_dataset(3, 4, 55);
    const Network net(micro_spec(ds.meta));
    RandomStream rng(5);
    const Vector theta = net.init_parameters(rng);
    const auto splits = split_dataset(ds);

    std::vector<Vector> per_user;
    std::vector<const TrainingSample*> pooled;
    for (const auto& s : splits) {
        std::vector<std::size_t> all(s.train.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        per_user.push_back(local_gradient(net, theta, s.train, all, nullptr));
        pooled.insert(pooled.end(), s.train.begin(), s.train.end());
    }
    const Vector fed = aggregate(per_user);
    const Vector full = batch_gradient(net, theta, pooled, nullptr, 1).gradient;
    // equal |D_k| makes the unweighted user mean the pooled mean
    CHECK((fed - full).norm() <= 1e-10 * std::max(1.0, full.norm()));
}

TEST_CASE("noisier links cannot help on average") {
    // 10 seeds at micro scale: mean final validation RMSE at 10 dB gradient
    // SNR must not beat the noiseless link.
    const Dataset ds = micro_dataset(2, 15, 99);
    const NetworkSpec spec = micro_spec(ds.meta);
    double clean_sum = 0.0, noisy_sum = 0.0;
    int clean_count = 0, noisy_count = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        TrainConfig tc = micro_train(TrainMode::federated, 12, seed);
        tc.learning_rate = 1e-5;
        const TrainResult clean = run_federated(ds, spec, tc);
        clean_sum += clean.rounds.back().val_rmse;
        ++clean_count;
        tc.gradient_snr_db = 10.0;
        try {
            const TrainResult noisy = run_federated(ds, spec, tc);
            noisy_sum += noisy.rounds.back().val_rmse;
        } catch (const NumericError&) {
            noisy_sum += 10.0 * clean.rounds.back().val_rmse;  // diverged: count as very bad
        }
        ++noisy_count;
    }
    CHECK(noisy_sum / noisy_count >= clean_sum / clean_count);
}

TEST_CASE("round log CSV schema") {
    const Dataset ds = micro_dataset(1, 5, 3);
    const NetworkSpec spec = micro_spec(ds.meta);
    TrainConfig tc = micro_train(TrainMode::federated, 2, 3);
    const TrainResult r = run_federated(ds, spec, tc);
    const std::string path = "test_round_log.csv";
    write_round_log(path, TrainMode::federated, tc.gradient_snr_db, r.rounds,
                    {{"seed", "3"}});
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "# seed = 3");
    std::getline(in, line);
    CHECK(line == "round,mode,loss,val_rmse,grad_norm_mean,snr_theta_db,wall_ms");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    in.close();
    std::remove(path.c_str());
}

TEST_SUITE_END();
