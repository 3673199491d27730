#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "avic/attacks.hpp"
#include "avic/pipeline.hpp"
#include "avic/synth.hpp"

using namespace avic;

namespace {

struct Fixture {
    ParameterStore<float> store;
    VaeArch vae_arch;
    GeneratorArch gen_arch;
    ClassifierArch cls_arch;
    Fixture() {
        vae_arch = build_vae(store, DatasetId::mnist, 16, 21);
        gen_arch = build_generator(store, DatasetId::mnist, 21);
        cls_arch = build_classifier(store, "plain_cnn", DatasetId::mnist, 21);
    }
    void randomize_generator_output(uint64_t seed) {
        CounterRng rng(seed);
        fill_uniform(store.at("gen.out.w").value, rng, -0.3, 0.3);
        fill_uniform(store.at("gen.out.b").value, rng, -0.1, 0.1);
    }
};

std::vector<float> test_images(size_t n, uint64_t seed) {
    auto split = synth_digits(n, seed);
    return split.images;
}

double linf(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(double(a[i]) - double(b[i])));
    return m;
}

}  // namespace

TEST_CASE("project_linf examples") {
    std::vector<float> origin{0.5f, 0.5f, 0.05f};
    std::vector<float> inside{0.55f, 0.45f, 0.1f};
    CHECK(project_linf(origin, inside, 0.1f) == inside);

    std::vector<float> out = project_linf(origin, {0.9f, 0.1f, -0.5f}, 0.1f);
    CHECK(out[0] == doctest::Approx(0.6f));
    CHECK(out[1] == doctest::Approx(0.4f));
    CHECK(out[2] == doctest::Approx(0.0f));  // pixel range binds before the ball

    CHECK_THROWS_AS(project_linf(origin, {0.1f}, 0.1f), ShapeError);
}

TEST_CASE("fgsm: sign step, clamp, zero gradient") {
    // loss = sum(w .* x) has constant gradient w
    std::vector<float> w{2.3f, -1.7f, 0.0f, 5.0f};
    auto loss_fn = [&](Tape<float>& t, TensorRef x) {
        TensorRef wr = t.leaf(w, {1, 4}, false);
        return sum_all(t, mul(t, x, wr));
    };
    std::vector<float> x{0.5f, 0.5f, 0.5f, 0.95f};
    auto xa = fgsm<float>(loss_fn, x, {1, 4}, 0.1f);
    CHECK(xa[0] == doctest::Approx(0.6f));   // +eps on positive gradient
    CHECK(xa[1] == doctest::Approx(0.4f));   // -eps on negative gradient
    CHECK(xa[2] == doctest::Approx(0.5f));   // sign(0) = 0
    CHECK(xa[3] == doctest::Approx(1.0f));   // clamped at the pixel range

    auto same = fgsm<float>(loss_fn, x, {1, 4}, 0.0f);
    CHECK(same == x);
}

TEST_CASE("pgd: zero budget, fgsm reduction") {
    Fixture f;
    auto imgs = test_images(8, 77);
    Shape shape{8, 1, 28, 28};
    auto loss_fn = classifier_attack_loss(f.store, f.cls_arch, synth_digits(8, 77).labels);

    AttackSpec zero;
    zero.method = AttackMethod::pgd;
    zero.epsilon = 0.0;
    zero.steps = 7;
    CHECK(pgd(loss_fn, imgs, shape, zero) == imgs);

    AttackSpec one;
    one.method = AttackMethod::pgd;
    one.epsilon = 0.1;
    one.steps = 1;
    one.step_size = 0.1;
    one.rand_init = false;
    auto via_pgd = pgd(loss_fn, imgs, shape, one);
    auto via_fgsm = fgsm(loss_fn, imgs, shape, 0.1f);
    CHECK(via_pgd == via_fgsm);  // bit-exact
}

TEST_CASE("pgd determinism and rand_init seeding") {
    Fixture f;
    auto imgs = test_images(4, 78);
    Shape shape{4, 1, 28, 28};
    auto loss_fn = vae_attack_loss(f.store, f.vae_arch, 4242);

    AttackSpec spec;
    spec.method = AttackMethod::pgd;
    spec.epsilon = 0.1;
    spec.steps = 5;
    spec.rand_init = true;
    spec.seed = 9;
    auto a = pgd(loss_fn, imgs, shape, spec);
    auto b = pgd(loss_fn, imgs, shape, spec);
    CHECK(a == b);
    spec.seed = 10;
    auto c = pgd(loss_fn, imgs, shape, spec);
    CHECK(a != c);
    CHECK(linf(a, imgs) <= 0.1 + 1e-6);
    CHECK(linf(c, imgs) <= 0.1 + 1e-6);
}

TEST_CASE("generator attack: zero budget and fresh build are the identity") {
    Fixture f;
    auto imgs = test_images(6, 79);
    Shape shape{6, 1, 28, 28};
    CHECK(generator_attack(f.store, f.gen_arch, imgs, shape, 0.0f) == imgs);
    // zero-initialized final layer: identity even at nonzero budget
    CHECK(generator_attack(f.store, f.gen_arch, imgs, shape, 0.5f) == imgs);
}

TEST_CASE("linf contract holds exhaustively for all methods") {
    Fixture f;
    f.randomize_generator_output(555);
    auto split = synth_digits(128, 80);
    Shape shape{int(split.count()), 1, 28, 28};

    for (double eps : {0.0, 0.02, 0.1, 0.3}) {
        auto xa_gen = generator_attack(f.store, f.gen_arch, split.images, shape, float(eps));
        CHECK(linf(xa_gen, split.images) <= eps + 1e-6);

        auto cls_fn = classifier_attack_loss(f.store, f.cls_arch, split.labels);
        auto xa_fgsm = fgsm(cls_fn, split.images, shape, float(eps));
        CHECK(linf(xa_fgsm, split.images) <= eps + 1e-6);

        AttackSpec spec;
        spec.method = AttackMethod::pgd;
        spec.epsilon = eps;
        spec.steps = 4;
        auto vae_fn = vae_attack_loss(f.store, f.vae_arch, 606);
        auto xa_pgd = pgd(vae_fn, split.images, shape, spec);
        CHECK(linf(xa_pgd, split.images) <= eps + 1e-6);

        for (auto* xs : {&xa_gen, &xa_fgsm, &xa_pgd})
            for (float v : *xs) {
                CHECK(v >= 0.0f);
                CHECK(v <= 1.0f);
            }
    }
}

TEST_CASE("attack loss interfaces: vae side needs no labels, classifier side no vae store") {
    // stores holding only the one model each; construction fails loudly if the
    // other side were touched
    ParameterStore<float> vae_only;
    VaeArch vae_arch = build_vae(vae_only, DatasetId::mnist, 16, 30);
    ParameterStore<float> cls_only;
    ClassifierArch cls_arch = build_classifier(cls_only, "plain_cnn", DatasetId::mnist, 30);

    auto imgs = test_images(4, 81);
    Shape shape{4, 1, 28, 28};

    auto vae_fn = vae_attack_loss(vae_only, vae_arch, 111);
    auto xa = fgsm(vae_fn, imgs, shape, 0.05f);
    CHECK(linf(xa, imgs) <= 0.05 + 1e-6);

    auto cls_fn = classifier_attack_loss(cls_only, cls_arch, {1, 2, 3, 4});
    auto xb = fgsm(cls_fn, imgs, shape, 0.05f);
    CHECK(linf(xb, imgs) <= 0.05 + 1e-6);
}

TEST_CASE("vae-targeted attack objective is deterministic given the noise seed") {
    Fixture f;
    auto imgs = test_images(4, 82);
    Shape shape{4, 1, 28, 28};
    auto fn = vae_attack_loss(f.store, f.vae_arch, 777);
    auto g1 = loss_input_gradient(fn, imgs, shape);
    auto g2 = loss_input_gradient(fn, imgs, shape);
    CHECK(g1 == g2);
    auto fn2 = vae_attack_loss(f.store, f.vae_arch, 778);
    CHECK(loss_input_gradient(fn2, imgs, shape) != g1);
}

TEST_CASE("attack spec validation") {
    AttackSpec s;
    s.epsilon = 1.5;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.epsilon = 0.1;
    s.steps = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.steps = 10;
    CHECK_NOTHROW(s.validate());
    CHECK(s.resolved_step() == doctest::Approx(2.5 * 0.1 / 10));
}

TEST_CASE("pgd beats fgsm on at least 90% of test images") {
    // brief classifier training so the loss surface is meaningful
    auto train = synth_digits(1024, 90);
    auto test = synth_digits(128, 91);
    RunConfig cfg;
    cfg.batch_size = 64;
    cfg.seed = 40;
    cfg.cls_epochs = 1;
    ParameterStore<float> store;
    ClassifierArch arch = build_classifier(store, "plain_cnn", DatasetId::mnist,
                                           derive_seed(cfg.seed, "cls_init"));
    train_classifier_clean(store, arch, train, cfg, 2);

    const double eps = 0.1;
    AttackSpec spec;
    spec.method = AttackMethod::pgd;
    spec.epsilon = eps;
    spec.steps = 10;
    spec.step_size = 2.5 * eps / 10;

    auto per_image_ce = [&](const std::vector<float>& xs, const Batch& b) {
        Tape<float> tape;
        auto bind = bind_params(tape, store, "cls.", false);
        TensorRef x = tape.leaf(xs, {b.n, 1, 28, 28}, false);
        const auto& logits = tape.value(classifier_forward(tape, bind, arch, x));
        std::vector<double> out(size_t(b.n));
        int k = arch.dims.K;
        for (int n = 0; n < b.n; ++n) {
            const float* row = logits.data() + int64_t(n) * k;
            float m = row[0];
            for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
            double se = 0;
            for (int j = 0; j < k; ++j) se += std::exp(double(row[j]) - m);
            out[size_t(n)] = (double(m) + std::log(se)) - double(row[b.labels[size_t(n)]]);
        }
        return out;
    };

    int wins = 0, total = 0;
    for (const Batch& b : sequential_batches(test, 64)) {
        auto fn = classifier_attack_loss(store, arch, b.labels);
        Shape shape{b.n, 1, 28, 28};
        auto ce_pgd = per_image_ce(pgd(fn, b.images, shape, spec), b);
        auto ce_fgsm = per_image_ce(fgsm(fn, b.images, shape, float(eps)), b);
        for (int n = 0; n < b.n; ++n) {
            wins += ce_pgd[size_t(n)] >= ce_fgsm[size_t(n)];
            ++total;
        }
    }
    INFO("pgd >= fgsm on " << wins << " of " << total);
    CHECK(wins * 10 >= total * 9);
}

TEST_CASE("trained-direction sanity: fgsm raises the loss it attacks") {
    Fixture f;
    auto split = synth_digits(32, 83);
    Shape shape{32, 1, 28, 28};
    auto fn = vae_attack_loss(f.store, f.vae_arch, 999);
    auto eval_loss = [&](const std::vector<float>& xs) {
        Tape<float> t;
        TensorRef x = t.leaf(xs, shape, false);
        return double(t.value(fn(t, x))[0]);
    };
    double clean = eval_loss(split.images);
    double adv = eval_loss(fgsm(fn, split.images, shape, 0.1f));
    CHECK(adv > clean);
}
