#include "gdastream/drift_sim.hpp"
#include "gdastream/pipeline.hpp"
#include "support.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

using namespace gdastream;
using namespace gdastream::pipeline;

namespace {

drift::Generated small_stream(std::uint64_t seed = 1)
{
    drift::DriftSpec s;
    s.classes = 5;
    s.dim = 12;
    s.domains = 4;
    s.batches_per_domain = 3;
    s.batch_size = 64;
    s.total_angle_deg = 30.0;
    s.seed = seed;
    return drift::generate(s);
}

std::vector<std::uint32_t> predictions_of(const PredictionLog& log)
{
    std::vector<std::uint32_t> out;
    for (const auto& r : log)
        out.push_back(r.prediction);
    return out;
}

PredictionLog make_log(const std::vector<std::pair<std::uint32_t, std::vector<bool>>>& domains)
{
    PredictionLog log;
    std::uint32_t step = 1;
    for (const auto& [id, hits] : domains) {
        for (bool h : hits)
            log.push_back({step, id, 1, h ? 1u : 0u});
        ++step;
    }
    return log;
}

}  // namespace

TEST_CASE("summarize weights domains by size")
{
    std::vector<bool> a(10, true);
    std::vector<bool> b(30, false);
    for (int i = 0; i < 15; ++i)
        b[static_cast<std::size_t>(i)] = true;
    const auto s = summarize(make_log({{0, a}, {1, b}}));
    REQUIRE(s.domains.size() == 2);
    CHECK(s.domains[0].accuracy == 1.0);
    CHECK(s.domains[1].accuracy == 0.5);
    CHECK(s.weighted_accuracy == doctest::Approx(0.625).epsilon(1e-15));

    const auto one = summarize(make_log({{3, {true, false, true, true}}}));
    CHECK(one.weighted_accuracy == 0.75);
    CHECK(one.domains[0].accuracy == 0.75);
}

TEST_CASE("summarize ignores record order and checks the manifest")
{
    std::mt19937_64 rng(61);
    auto log = make_log({{0, {true, false, false}}, {2, {true, true}}, {1, {false, true, true, true}}});
    const auto base = summarize(log);
    std::shuffle(log.begin(), log.end(), rng);
    const auto shuffled = summarize(log);
    CHECK(shuffled.weighted_accuracy == base.weighted_accuracy);
    for (std::size_t j = 0; j < base.domains.size(); ++j)
        CHECK(shuffled.domains[j].accuracy == base.domains[j].accuracy);

    StreamManifest m;
    m.domains = {{2, 1, 2}, {0, 1, 3}, {1, 1, 4}};
    const auto ordered = summarize(log, &m);
    CHECK(ordered.domains[0].domain == 2);
    m.domains[1].sample_count = 5;
    CHECK_THROWS_AS(summarize(log, &m), DataError);

    log[0].label.reset();
    CHECK_THROWS_AS(summarize(log), DataError);
}

TEST_CASE("ablated pipeline reproduces zero-shot")
{
    auto g = small_stream(2);
    MemoryStream stream(g.batches);
    const auto zero = run_zero_shot(stream, g.prototypes);

    PipelineConfig bare;
    disable_component(bare, "em");
    disable_component(bare, "fusion");
    disable_component(bare, "self-paced");
    const auto r = run_stream(stream, g.prototypes, bare);
    CHECK(predictions_of(r.rounds[0].log) == predictions_of(zero.rounds[0].log));

    PipelineConfig no_alpha;
    no_alpha.alpha = 0.0;
    disable_component(no_alpha, "self-paced");
    const auto r0 = run_stream(stream, g.prototypes, no_alpha);
    CHECK(predictions_of(r0.rounds[0].log) == predictions_of(zero.rounds[0].log));
    CHECK(r0.summary.weighted_accuracy == zero.summary.weighted_accuracy);
}

TEST_CASE("one round of the long-term driver equals a single pass")
{
    auto g = small_stream(3);
    MemoryStream stream(g.batches);
    const auto a = run_stream(stream, g.prototypes, PipelineConfig{});
    const auto b = run_longterm(stream, g.prototypes, PipelineConfig{});
    CHECK(predictions_of(a.rounds[0].log) == predictions_of(b.rounds[0].log));
    CHECK(a.summary.weighted_accuracy == b.summary.weighted_accuracy);
}

TEST_CASE("predictions depend only on the past")
{
    auto g = small_stream(4);
    MemoryStream full(g.batches);
    const auto whole = run_stream(full, g.prototypes, PipelineConfig{});
    std::vector<EmbeddingBatch> head(g.batches.begin(), g.batches.begin() + 5);
    // Perturb the future: the prefix must not change.
    std::vector<EmbeddingBatch> altered = g.batches;
    for (std::size_t i = 5; i < altered.size(); ++i)
        altered[i].features *= -1.0f;
    MemoryStream prefix(head), other(altered);
    const auto a = predictions_of(run_stream(prefix, g.prototypes, PipelineConfig{}).rounds[0].log);
    const auto b = predictions_of(run_stream(other, g.prototypes, PipelineConfig{}).rounds[0].log);
    const auto w = predictions_of(whole.rounds[0].log);
    REQUIRE(a.size() == 5 * 64);
    CHECK(std::equal(a.begin(), a.end(), w.begin()));
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
}

TEST_CASE("labels never reach the predictions")
{
    auto g = small_stream(5);
    auto shuffled = g.batches;
    for (auto& b : shuffled)
        for (auto& y : *b.labels)
            y = (y + 1) % 5;
    MemoryStream a(g.batches), b(shuffled);
    CHECK(predictions_of(run_stream(a, g.prototypes, PipelineConfig{}).rounds[0].log) ==
          predictions_of(run_stream(b, g.prototypes, PipelineConfig{}).rounds[0].log));
}

TEST_CASE("runs are deterministic")
{
    auto g = small_stream(6);
    MemoryStream stream(g.batches);
    PipelineConfig c;
    c.rounds = 2;
    const auto a = run_longterm(stream, g.prototypes, c);
    const auto b = run_longterm(stream, g.prototypes, c);
    REQUIRE(a.rounds.size() == 2);
    CHECK(a.summary.round_averages.size() == 2);
    for (std::size_t r = 0; r < 2; ++r)
        CHECK(predictions_of(a.rounds[r].log) == predictions_of(b.rounds[r].log));
}

TEST_CASE("checkpoint resume continues the stream exactly")
{
    auto g = small_stream(7);
    const std::size_t cut = 6;
    MemoryStream full(g.batches);
    const auto whole = predictions_of(run_stream(full, g.prototypes, PipelineConfig{}).rounds[0].log);

    std::vector<EmbeddingBatch> first(g.batches.begin(), g.batches.begin() + cut);
    std::vector<EmbeddingBatch> second(g.batches.begin() + cut, g.batches.end());
    const auto file = testing::scratch_dir("resume") / "ck.bin";
    Pipeline p(g.prototypes, PipelineConfig{});
    MemoryStream s1(first);
    auto r1 = run_with(p, s1, 1);
    p.save_checkpoint(file);

    Pipeline q(g.prototypes, PipelineConfig{});
    q.load_checkpoint(file);
    CHECK(q.mode() == p.mode());
    MemoryStream s2(second);
    auto r2 = run_with(q, s2, 1);
    auto joined = predictions_of(r1.rounds[0].log);
    const auto tail = predictions_of(r2.rounds[0].log);
    joined.insert(joined.end(), tail.begin(), tail.end());
    CHECK(joined == whole);

    std::ofstream(file, std::ios::app) << "x";
    Pipeline bad(g.prototypes, PipelineConfig{});
    CHECK_THROWS_AS(bad.load_checkpoint(file), DataError);
}

TEST_CASE("errors name the offending batch")
{
    auto g = small_stream(8);
    g.batches[2].features(0, 0) = std::numeric_limits<float>::quiet_NaN();
    MemoryStream stream(g.batches);
    try {
        run_stream(stream, g.prototypes, PipelineConfig{});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).rfind("batch 3: ", 0) == 0);
    }

    PipelineConfig fixed;
    fixed.batch_size = 10;
    auto clean = small_stream(8);
    MemoryStream s2(clean.batches);
    CHECK_THROWS_AS(run_stream(s2, clean.prototypes, fixed), ConfigError);
}

TEST_CASE("config validation")
{
    PipelineConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = [](auto mutate) {
        PipelineConfig x;
        mutate(x);
        CHECK_THROWS_AS(x.validate(), ConfigError);
    };
    bad([](PipelineConfig& x) { x.alpha = -1.0; });
    bad([](PipelineConfig& x) { x.lr = 0.0; });
    bad([](PipelineConfig& x) { x.ema = 1.5; });
    bad([](PipelineConfig& x) { x.eps = -0.1; });
    bad([](PipelineConfig& x) { x.tau = 0.0; });
    bad([](PipelineConfig& x) { x.kappa = 1.0; });
    bad([](PipelineConfig& x) { x.pca_dim = 0; });
    bad([](PipelineConfig& x) { x.rounds = 0; });
    CHECK_THROWS_AS(disable_component(c, "adapter"), ConfigError);
}

TEST_CASE("forced modes and the ablation modes")
{
    auto g = small_stream(9);
    for (auto [mode, expected] : {std::pair{ModeOverride::ForceLda, CovarianceMode::Homogeneous},
                                  std::pair{ModeOverride::ForceQda, CovarianceMode::Heterogeneous}}) {
        PipelineConfig c;
        c.mode = mode;
        Pipeline p(g.prototypes, c);
        p.step(g.batches[0].features);
        CHECK(p.mode() == expected);
        CHECK_FALSE(p.report());
    }
    PipelineConfig no_test;
    disable_component(no_test, "hypothesis-test");
    Pipeline p(g.prototypes, no_test);
    CHECK_FALSE(p.mode_decided());
    p.step(g.batches[0].features);
    CHECK(p.mode() == CovarianceMode::Heterogeneous);

    PipelineConfig no_continual;
    disable_component(no_continual, "continual");
    Pipeline q(g.prototypes, no_continual);
    for (const auto& b : g.batches)
        q.step(b.features);
    CHECK(q.state().step == 1);
    CHECK(q.adapter().steps == 1);
}

TEST_CASE("output writers")
{
    auto g = small_stream(10);
    MemoryStream stream(g.batches);
    PipelineConfig c;
    c.rounds = 2;
    const auto r = run_longterm(stream, g.prototypes, c);
    const auto dir = testing::scratch_dir("writers");
    write_prediction_csv(r.rounds[0].log, dir / "p.csv");
    std::ifstream in(dir / "p.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,domain,prediction,label");
    std::size_t rows = 0;
    while (std::getline(in, line))
        ++rows;
    CHECK(rows == r.rounds[0].log.size());

    const std::string text = run_log_text(c, r);
    CHECK(text.find("weighted_accuracy=") != std::string::npos);
    CHECK(text.find("round.2.weighted_accuracy=") != std::string::npos);
    CHECK(text.find("domain.3.accuracy=") != std::string::npos);

    write_accuracy_table(r, dir / "acc.dat");
    std::ifstream t(dir / "acc.dat");
    std::getline(t, line);
    CHECK(line == "# domain round1 round2");
}
