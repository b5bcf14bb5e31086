#include <catch_amalgamated.hpp>

#include <metares/readout.hpp>

#include <algorithm>
#include <random>

using Catch::Approx;
using namespace metares;

namespace {

StateMatrix random_state(Eigen::Index t_n, Eigen::Index n_s, std::uint64_t seed) {
    StateMatrix x;
    x.sample_rate = 500.0;
    x.values.resize(t_n, n_s);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    for (Eigen::Index t = 0; t < t_n; ++t)
        for (Eigen::Index j = 0; j < n_s; ++j) x.values(t, j) = nd(gen);
    for (Eigen::Index j = 0; j < n_s; ++j)
        x.sensors.push_back({"s" + std::to_string(j), SensorKind::edge_x, 0, static_cast<int>(j)});
    return x;
}

TimeSeries series_like(const StateMatrix& x, Eigen::VectorXd v, std::string label = "y") {
    TimeSeries y;
    y.sample_rate = x.sample_rate;
    y.label = std::move(label);
    y.values = std::move(v);
    return y;
}

}  // namespace

// ---------------------------------------------------------------------------
// exact recovery
// ---------------------------------------------------------------------------

TEST_CASE("unregularized training recovers an exact linear rule", "[readout][train]") {
    StateMatrix x = random_state(100, 4, 21);
    TimeSeries y = series_like(x, 2.0 * x.values.col(1) - x.values.col(3) +
                                      Eigen::VectorXd::Constant(100, 5.0));
    ReadoutModel model = train(x, y, 0.0);

    REQUIRE(model.weights[0] == Approx(0.0).margin(1e-9));
    REQUIRE(model.weights[1] == Approx(2.0).margin(1e-9));
    REQUIRE(model.weights[2] == Approx(0.0).margin(1e-9));
    REQUIRE(model.weights[3] == Approx(-1.0).margin(1e-9));
    REQUIRE(model.bias == Approx(5.0).margin(1e-9));
    REQUIRE(model.task == "y");

    TimeSeries pred = predict(model, x);
    REQUIRE(r_squared(y, pred) == Approx(1.0).margin(1e-12));
    for (Eigen::Index t = 0; t < y.size(); ++t)
        REQUIRE(pred.values[t] == Approx(y.values[t]).margin(1e-9));
}

TEST_CASE("training matches a pseudo-inverse reference", "[readout][train][oracle]") {
    std::mt19937_64 meta(2024);
    for (int instance = 0; instance < 20; ++instance) {
        const Eigen::Index t_n = 30 + static_cast<Eigen::Index>(meta() % 171);
        const Eigen::Index n_s = 2 + static_cast<Eigen::Index>(meta() % 19);
        StateMatrix x = random_state(t_n, n_s, meta());
        std::mt19937_64 gen(meta());
        std::normal_distribution<double> nd;
        Eigen::VectorXd w_true(n_s);
        for (Eigen::Index j = 0; j < n_s; ++j) w_true[j] = nd(gen);
        Eigen::VectorXd noise(t_n);
        for (Eigen::Index t = 0; t < t_n; ++t) noise[t] = 0.1 * nd(gen);
        TimeSeries y = series_like(x, x.values * w_true + noise);

        ReadoutModel model = train(x, y, 0.0);

        // reference: minimum-norm least squares on the centered system
        Eigen::RowVectorXd x_mean = x.values.colwise().mean();
        Eigen::MatrixXd xc = x.values.rowwise() - x_mean;
        Eigen::VectorXd yc = y.values.array() - y.values.mean();
        Eigen::VectorXd w_ref =
            Eigen::JacobiSVD<Eigen::MatrixXd>(xc, Eigen::ComputeThinU | Eigen::ComputeThinV)
                .solve(yc);

        REQUIRE((model.weights - w_ref).norm() <= 1e-8 * w_ref.norm());

        TimeSeries ref_pred = series_like(
            x, (x.values * w_ref).array() + (y.values.mean() - x_mean * w_ref));
        REQUIRE(r_squared(y, predict(model, x)) ==
                Approx(r_squared(y, ref_pred)).margin(1e-10));
    }
}

TEST_CASE("heavy ridge shrinks the weights toward zero", "[readout][train]") {
    StateMatrix x = random_state(120, 5, 4);
    TimeSeries y = series_like(x, x.values.col(0) + x.values.col(4));
    ReadoutModel model = train(x, y, 1e12);
    REQUIRE(model.weights.cwiseAbs().maxCoeff() < 1e-6);
    REQUIRE(r_squared(y, predict(model, x)) < 0.01);
}

TEST_CASE("default regularization follows the column energy", "[readout][train]") {
    StateMatrix x = random_state(90, 6, 11);
    TimeSeries y = series_like(x, x.values.col(2));
    Eigen::MatrixXd xc = x.values.rowwise() - x.values.colwise().mean();
    const double expect = 1e-6 * xc.squaredNorm() / 6.0;

    ReadoutModel auto_model = train(x, y);
    REQUIRE(auto_model.lambda == Approx(expect).epsilon(1e-12));

    ReadoutModel fixed = train(x, y, 0.37);
    REQUIRE(fixed.lambda == 0.37);
}

TEST_CASE("nested sensor sets never lower the training fit", "[readout][train]") {
    StateMatrix x = random_state(80, 6, 31);
    std::mt19937_64 gen(32);
    std::normal_distribution<double> nd;
    Eigen::VectorXd target(80);
    for (Eigen::Index t = 0; t < 80; ++t) target[t] = nd(gen);
    TimeSeries y = series_like(x, target);

    double prev = -1.0;
    for (Eigen::Index k = 1; k <= 6; ++k) {
        StateMatrix sub;
        sub.sample_rate = x.sample_rate;
        sub.values = x.values.leftCols(k);
        sub.sensors.assign(x.sensors.begin(), x.sensors.begin() + k);
        ReadoutModel model = train(sub, y, 0.0);
        const double r2 = r_squared(y, predict(model, sub));
        REQUIRE(r2 >= prev - 1e-12);
        prev = r2;
    }
}

TEST_CASE("training rejects degenerate problems", "[readout][train][error]") {
    StateMatrix x = random_state(50, 3, 8);
    TimeSeries y = series_like(x, x.values.col(0));

    SECTION("length mismatch") {
        TimeSeries bad = y;
        bad.values.conservativeResize(49);
        REQUIRE_THROWS_AS(train(x, bad, 0.0), std::invalid_argument);
    }
    SECTION("single sample") {
        StateMatrix tiny = random_state(1, 3, 8);
        TimeSeries ty = series_like(tiny, Eigen::VectorXd::Zero(1));
        REQUIRE_THROWS_AS(train(tiny, ty, 0.0), std::invalid_argument);
    }
    SECTION("all-constant states with no ridge") {
        StateMatrix flat = x;
        flat.values.setConstant(2.5);
        REQUIRE_THROWS_WITH(train(flat, y, 0.0),
                            Catch::Matchers::ContainsSubstring("degenerate"));
        // the automatic lambda collapses to zero here as well
        REQUIRE_THROWS_AS(train(flat, y), std::invalid_argument);
    }
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

TEST_CASE("prediction matches sensors by id, not position", "[readout][predict]") {
    StateMatrix x = random_state(60, 3, 14);
    TimeSeries y = series_like(x, x.values.col(0) - 2.0 * x.values.col(2));
    ReadoutModel model = train(x, y, 0.0);
    TimeSeries base = predict(model, x);

    StateMatrix shuffled;
    shuffled.sample_rate = x.sample_rate;
    shuffled.values.resize(60, 3);
    shuffled.values.col(0) = x.values.col(2);
    shuffled.values.col(1) = x.values.col(0);
    shuffled.values.col(2) = x.values.col(1);
    shuffled.sensors = {x.sensors[2], x.sensors[0], x.sensors[1]};

    TimeSeries again = predict(model, shuffled);
    for (Eigen::Index t = 0; t < 60; ++t)
        REQUIRE(again.values[t] == Approx(base.values[t]).margin(1e-12));
}

TEST_CASE("prediction lists missing and extra sensors", "[readout][predict][error]") {
    StateMatrix x = random_state(40, 2, 5);
    TimeSeries y = series_like(x, x.values.col(0));
    ReadoutModel model = train(x, y, 0.0);

    StateMatrix other = random_state(40, 2, 6);
    other.sensors[1].id = "zz";
    REQUIRE_THROWS_WITH(predict(model, other),
                        Catch::Matchers::ContainsSubstring("missing: s1") &&
                            Catch::Matchers::ContainsSubstring("extra: zz"));
}

TEST_CASE("a zero-weight model predicts its bias", "[readout][predict]") {
    ReadoutModel model;
    model.weights = Eigen::VectorXd::Zero(2);
    model.bias = 3.5;
    model.task = "flat";
    model.sensor_ids = {"s0", "s1"};
    StateMatrix x = random_state(10, 2, 77);
    TimeSeries pred = predict(model, x);
    REQUIRE(pred.label == "flat");
    for (Eigen::Index t = 0; t < 10; ++t) REQUIRE(pred.values[t] == 3.5);
}

// ---------------------------------------------------------------------------
// coefficient of determination
// ---------------------------------------------------------------------------

TEST_CASE("r_squared reference points", "[readout][metric]") {
    TimeSeries truth;
    truth.sample_rate = 1.0;
    truth.label = "t";
    truth.values.resize(4);
    truth.values << 1.0, 2.0, 3.0, 4.0;

    SECTION("perfect prediction scores one") {
        REQUIRE(r_squared(truth, truth) == 1.0);
    }
    SECTION("predicting the mean scores zero") {
        TimeSeries mean = truth;
        mean.values.setConstant(truth.values.mean());
        REQUIRE(r_squared(truth, mean) == 0.0);
    }
    SECTION("hand-computed four-point case") {
        // residuals (1,-1,1,-1): SS_res = 4, SS_tot = 5, R^2 = 0.2
        TimeSeries pred = truth;
        pred.values << 2.0, 1.0, 4.0, 3.0;
        REQUIRE(r_squared(truth, pred) == Approx(0.2).margin(1e-15));
    }
    SECTION("invariant under affine rescaling of both signals") {
        TimeSeries pred = truth;
        pred.values << 1.1, 2.3, 2.8, 3.9;
        const double base = r_squared(truth, pred);
        TimeSeries truth2 = truth;
        TimeSeries pred2 = pred;
        truth2.values = 3.0 * truth.values.array() - 7.0;
        pred2.values = 3.0 * pred.values.array() - 7.0;
        REQUIRE(r_squared(truth2, pred2) == Approx(base).margin(1e-12));
    }
    SECTION("degenerate inputs are rejected") {
        TimeSeries shorter = truth;
        shorter.values.conservativeResize(3);
        REQUIRE_THROWS_AS(r_squared(truth, shorter), std::invalid_argument);
        TimeSeries flat = truth;
        flat.values.setConstant(2.0);
        REQUIRE_THROWS_WITH(r_squared(flat, truth),
                            Catch::Matchers::ContainsSubstring("undefined"));
    }
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

TEST_CASE("readout round-trips through JSON", "[readout][json]") {
    StateMatrix x = random_state(50, 3, 41);
    x.sensors[0].id = "beta";
    x.sensors[1].id = "alpha";
    x.sensors[2].id = "gamma";
    TimeSeries y = series_like(x, x.values.col(0) + 0.5 * x.values.col(1), "roundtrip");
    ReadoutModel model = train(x, y, 1e-4);

    ReadoutModel back = readout_from_json(readout_to_json(model));
    REQUIRE(back.task == "roundtrip");
    REQUIRE(back.lambda == model.lambda);
    REQUIRE(back.bias == model.bias);
    // reloaded ids come back sorted; predictions must not care
    REQUIRE(std::is_sorted(back.sensor_ids.begin(), back.sensor_ids.end()));

    TimeSeries a = predict(model, x);
    TimeSeries b = predict(back, x);
    for (Eigen::Index t = 0; t < a.size(); ++t)
        REQUIRE(b.values[t] == Approx(a.values[t]).margin(1e-15));
}
