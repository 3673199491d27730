#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "avic/gradcheck.hpp"
#include "avic/synth.hpp"
#include "avic/vae.hpp"

using namespace avic;

TEST_CASE("kl closed forms") {
    Tape<double> t;
    TensorRef zero = t.leaf({0.0}, {1, 1}, false);
    CHECK(t.value(kl_diag_gaussian(t, zero, zero))[0] == 0.0);

    TensorRef one = t.leaf({1.0}, {1, 1}, false);
    CHECK(t.value(kl_diag_gaussian(t, one, zero))[0] == doctest::Approx(0.5).epsilon(1e-12));

    double expect = (std::exp(1.0) - 2.0) / 2.0;
    CHECK(t.value(kl_diag_gaussian(t, zero, one))[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("kl is nonnegative for random inputs") {
    CounterRng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> mu(12), lv(12);
        fill_uniform(mu, rng, -4.0, 4.0);
        fill_uniform(lv, rng, -6.0, 6.0);
        Tape<double> t;
        double v = t.value(kl_diag_gaussian(t, t.leaf(mu, {3, 4}, false), t.leaf(lv, {3, 4}, false)))[0];
        CHECK(v >= 0.0);
    }
}

TEST_CASE("vae_loss composes its two terms and stays nonnegative") {
    CounterRng rng(18);
    ParameterStore<double> store;
    VaeArch arch = build_vae(store, DatasetId::mnist, 16, 5);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> img(2 * 784);
        fill_uniform(img, rng, 0.0, 1.0);
        Tape<double> t;
        auto bind = bind_params(t, store, "vae.", false);
        TensorRef x = t.leaf(img, {2, 1, 28, 28}, false);
        auto out = vae_forward(t, bind, arch, x, rng.next_u64());
        double total = t.value(vae_loss(t, x, out))[0];
        double rec = t.value(half_sse(t, x, out.x_recon))[0];
        double kl = t.value(kl_diag_gaussian(t, out.mu, out.logvar))[0];
        CHECK(total == doctest::Approx(rec + kl).epsilon(1e-9));
        CHECK(total >= 0.0);
    }
}

TEST_CASE("x=recon with zero posterior gives zero loss") {
    Tape<double> t;
    TensorRef x = t.leaf({0.25, 0.5, 0.75, 1.0}, {1, 4}, false);
    TensorRef mu = t.leaf({0.0, 0.0}, {1, 2}, false);
    VaeOutput<double> out{x, mu, mu, mu};
    CHECK(t.value(vae_loss(t, x, out))[0] == 0.0);

    // batch 1, four pixels at difference 1, zero KL
    TensorRef a = t.leaf({1.0, 1.0, 1.0, 1.0}, {1, 4}, false);
    TensorRef b = t.leaf({0.0, 0.0, 0.0, 0.0}, {1, 4}, false);
    VaeOutput<double> out2{b, mu, mu, mu};
    CHECK(t.value(vae_loss(t, a, out2))[0] == doctest::Approx(2.0));
}

TEST_CASE("vae forward is deterministic under a fixed seed") {
    ParameterStore<float> store;
    VaeArch arch = build_vae(store, DatasetId::mnist, 16, 6);
    std::vector<float> img(3 * 784);
    CounterRng rng(19);
    fill_uniform(img, rng, 0.0, 1.0);

    auto run = [&]() {
        Tape<float> t;
        auto bind = bind_params(t, store, "vae.", false);
        TensorRef x = t.leaf(img, {3, 1, 28, 28}, false);
        auto out = vae_forward(t, bind, arch, x, 12345);
        auto v = t.value(out.x_recon);
        auto z = t.value(out.z);
        v.insert(v.end(), z.begin(), z.end());
        return v;
    };
    CHECK(run() == run());
}

TEST_CASE("collapsed variance makes z equal mu") {
    // drive logvar to the clamp floor: exp(-10/2) ~ 6.7e-3 noise scale
    ParameterStore<double> store;
    VaeArch arch = build_vae(store, DatasetId::mnist, 16, 6);
    auto& lvw = store.at("vae.encoder.logvar.w");
    std::fill(lvw.value.begin(), lvw.value.end(), 0.0);
    auto& lvb = store.at("vae.encoder.logvar.b");
    std::fill(lvb.value.begin(), lvb.value.end(), -500.0);  // clamps to -10

    Tape<double> t;
    auto bind = bind_params(t, store, "vae.", false);
    std::vector<double> img(784, 0.4);
    TensorRef x = t.leaf(img, {1, 1, 28, 28}, false);
    auto out = vae_forward(t, bind, arch, x, 999);
    const auto& z = t.value(out.z);
    const auto& mu = t.value(out.mu);
    const auto& lv = t.value(out.logvar);
    for (double v : lv) CHECK(v == -10.0);  // clamp applied
    for (size_t i = 0; i < z.size(); ++i)
        CHECK(z[i] == doctest::Approx(mu[i]).epsilon(0).scale(1).epsilon(0.05));
}

TEST_CASE("gradient of vae_loss w.r.t. x matches finite differences") {
    ParameterStore<double> store;
    VaeArch arch = build_vae(store, DatasetId::mnist, 16, 7);
    std::vector<double> noise(2 * 16);
    CounterRng rng(20);
    fill_normal(noise, rng);
    auto f = [&](Tape<double>& t, const std::vector<TensorRef>& in) {
        auto bind = bind_params(t, store, "vae.", false);
        TensorRef nz = t.leaf(noise, {2, 16}, false);
        auto out = vae_forward_with_noise(t, bind, arch, in[0], nz);
        return vae_loss(t, in[0], out);
    };
    std::vector<double> img(2 * 784);
    fill_uniform(img, rng, 0.2, 0.8);
    auto rep = finite_diff_check<double>(f, {img}, {{2, 1, 28, 28}}, 1e-5, 1e-4, 40, 2718);
    INFO(rep.worst);
    CHECK(rep.pass);
}

TEST_CASE("train_vae bookkeeping, zero learning rate, improvement") {
    auto split = synth_digits(64, 33);

    RunConfig cfg;
    cfg.batch_size = 32;
    cfg.seed = 4;
    cfg.vae_epochs = 1;
    {
        ParameterStore<float> store;
        VaeArch arch = build_vae(store, DatasetId::mnist, 16, derive_seed(cfg.seed, "vae_init"));
        StageResult r = train_vae(store, arch, split, cfg);
        CHECK(r.curve.size() == 1);
        CHECK(r.stage == "vae");
    }
    {
        ParameterStore<float> store;
        VaeArch arch = build_vae(store, DatasetId::mnist, 16, derive_seed(cfg.seed, "vae_init"));
        uint64_t before = store.checksum();
        RunConfig zero = cfg;
        zero.vae_lr = 1e-30;  // effectively zero step
        zero.vae_epochs = 2;
        StageResult r = train_vae(store, arch, split, zero);
        (void)r;
        RunConfig really_zero = cfg;
        really_zero.vae_lr = 0.0;
        ParameterStore<float> store2;
        VaeArch arch2 = build_vae(store2, DatasetId::mnist, 16, derive_seed(cfg.seed, "vae_init"));
        uint64_t before2 = store2.checksum();
        StageResult r2 = train_vae(store2, arch2, split, really_zero);
        CHECK(store2.checksum() == before2);  // parameters untouched
        CHECK(r2.curve.size() == size_t(really_zero.vae_epochs));
        for (size_t i = 1; i < r2.curve.size(); ++i)
            CHECK(r2.curve[i] == doctest::Approx(r2.curve[0]).epsilon(1e-6));  // flat curve
        (void)before;
    }
    {
        ParameterStore<float> store;
        VaeArch arch = build_vae(store, DatasetId::mnist, 16, derive_seed(cfg.seed, "vae_init"));
        RunConfig train_cfg = cfg;
        train_cfg.vae_epochs = 4;
        auto bigger = synth_digits(512, 34);
        StageResult r = train_vae(store, arch, bigger, train_cfg);
        CHECK(r.curve.back() < r.curve.front());
    }
}

TEST_CASE("vae training is bit-deterministic") {
    auto split = synth_digits(96, 35);
    RunConfig cfg;
    cfg.batch_size = 32;
    cfg.seed = 11;
    cfg.vae_epochs = 2;
    auto run = [&]() {
        ParameterStore<float> store;
        VaeArch arch = build_vae(store, DatasetId::mnist, 16, derive_seed(cfg.seed, "vae_init"));
        train_vae(store, arch, split, cfg);
        return store.checksum();
    };
    CHECK(run() == run());
}

TEST_CASE("trained reconstruction beats the untrained model by 5x") {
    auto train = synth_digits(4000, 36);
    auto held = synth_digits(256, 37);
    RunConfig cfg;
    cfg.batch_size = 128;
    cfg.seed = 12;
    cfg.vae_epochs = 10;
    cfg.vae_lr = 0.005;  // desk-scale rate; 0.05 collapses the posterior here

    ParameterStore<float> store;
    VaeArch arch = build_vae(store, DatasetId::mnist, 16, derive_seed(cfg.seed, "vae_init"));

    auto recon_sse = [&]() {
        auto batches = sequential_batches(held, 128);
        double total = 0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            auto& b = batches[bi];
            Tape<float> t;
            auto bind = bind_params(t, store, "vae.", false);
            std::vector<float> xs(b.images.begin(), b.images.end());
            TensorRef x = t.leaf(xs, {b.n, 1, 28, 28}, false);
            auto out = vae_forward(t, bind, arch, x, derive_seed(99, "recon", bi));
            total += double(t.value(half_sse(t, x, out.x_recon))[0]) * b.n;
        }
        return total / double(held.count());
    };

    double before = recon_sse();
    train_vae(store, arch, train, cfg);
    double after = recon_sse();
    INFO("before " << before << " after " << after);
    CHECK(after * 5.0 <= before);
}
