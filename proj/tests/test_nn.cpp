#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cgen/checkpoint.hpp"
#include "cgen/errors.hpp"
#include "cgen/gradcheck.hpp"
#include "cgen/nn.hpp"
#include "cgen/rng.hpp"

using namespace cgen;
using namespace cgen::nn;
using ad::Tensor;

namespace {

// Fills a tensor with uniform values in (lo, hi).
template <typename T>
void fill_uniform(Rng& rng, const Tensor<T>& t, double lo, double hi) {
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void fill_normal(Rng& rng, const Tensor<T>& t) {
    for (auto& v : t.data()) v = static_cast<T>(rng.normal());
}

template <typename T>
bool bitwise_equal(const Tensor<T>& a, const Tensor<T>& b) {
    if (!ad::same_shape(a.shape(), b.shape())) return false;
    auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < da.size(); ++i)
        if (da[i] != db[i]) return false;
    return true;
}

double sample_std(std::span<const float> values) {
    double mean = 0.0;
    for (float v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (float v : values) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(values.size() - 1));
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(static_cast<bool>(is));
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    REQUIRE(static_cast<bool>(os));
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("layer spec codec round-trips and rejects malformed text") {
    const std::vector<std::string> forms = {
        "conv(out=8,k=4,s=2,p=1)", "conv_transpose(out=3,k=4,s=2,p=1)", "dense(units=16)",
        "act(relu)",               "act(sigmoid)",                      "act(tanh)",
        "flatten",                 "reshape(64,2,2)",
    };
    for (const auto& text : forms) {
        CHECK(LayerSpec::parse(text).str() == text);
    }

    CHECK_THROWS_AS(LayerSpec::parse("conv(out=8,k=4)"), FormatError);
    CHECK_THROWS_AS(LayerSpec::parse("conv(out=8,k=4,s=2,p=1"), FormatError);
    CHECK_THROWS_AS(LayerSpec::parse("conv(out=8,k=4,s=2,q=1)"), FormatError);
    CHECK_THROWS_AS(LayerSpec::parse("dense(units=x)"), FormatError);
    CHECK_THROWS_AS(LayerSpec::parse("act(gelu)"), FormatError);
    CHECK_THROWS_AS(LayerSpec::parse("pool(2)"), FormatError);
    CHECK_THROWS_AS(LayerSpec::parse("flatten()"), FormatError);
    CHECK_THROWS_AS(LayerSpec::parse("reshape()"), FormatError);
}

TEST_CASE("network construction is seed- and name-deterministic") {
    const std::vector<LayerSpec> specs = {
        LayerSpec::conv(4, 4, 2, 1),
        LayerSpec::activation(Act::Relu),
        LayerSpec::flatten(),
        LayerSpec::dense(10),
    };
    Network<float> a("net", specs, {1, 8, 8}, 42);
    Network<float> b("net", specs, {1, 8, 8}, 42);
    Network<float> c("net", specs, {1, 8, 8}, 43);
    Network<float> d("other", specs, {1, 8, 8}, 42);

    CHECK(weight_hash(a.parameters()) == weight_hash(b.parameters()));
    CHECK(weight_hash(a.parameters()) != weight_hash(c.parameters()));
    CHECK(weight_hash(a.parameters()) != weight_hash(d.parameters()));

    // Handles are distinct storage, not aliases of a shared initializer.
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    CHECK(!pa[0].same_storage(pb[0]));
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(pa[i], pb[i]));

    CHECK(a.output_shape() == ad::Shape{10});
    CHECK(pa[0].name() == "net.w0");
    CHECK(pa[3].name() == "net.b3");
}

TEST_CASE("composition errors name the offending layers") {
    // dense directly on a conv plane
    CHECK_THROWS_WITH_AS(
        Network<float>("enc",
                       {LayerSpec::conv(8, 4, 2, 1), LayerSpec::dense(10)},
                       {1, 32, 32}, 1),
        doctest::Contains("layer 1 'dense(units=10)' does not compose with layer 0 "
                          "'conv(out=8,k=4,s=2,p=1)' output"),
        DimensionError);

    // stride does not divide the padded extent
    CHECK_THROWS_WITH_AS(
        Network<float>("enc", {LayerSpec::conv(4, 2, 2, 0)}, {1, 5, 5}, 1),
        doctest::Contains("non-integral conv output extent"), DimensionError);

    // reshape with a mismatched element count
    CHECK_THROWS_WITH_AS(
        Network<float>("dec",
                       {LayerSpec::flatten(), LayerSpec::reshape({3, 3, 3})},
                       {1, 4, 4}, 1),
        doctest::Contains("does not match target"), DimensionError);

    // batched forward requires a leading batch extent
    Network<float> net("enc", {LayerSpec::conv(2, 4, 2, 1)}, {1, 8, 8}, 1);
    auto flat = Tensor<float>::zeros({1, 8, 8});
    CHECK_THROWS_WITH_AS(net.forward(flat), doctest::Contains("expected batched input"),
                         DimensionError);
}

TEST_CASE("initialization follows the downstream activation") {
    // conv feeding a relu: He, std = sqrt(2 / fan_in), fan_in = 16*5*5 = 400
    Network<float> he("he", {LayerSpec::conv(64, 5, 1, 2), LayerSpec::activation(Act::Relu)},
                      {16, 8, 8}, 7);
    auto he_w = he.parameters()[0];
    REQUIRE(he_w.numel() == 64 * 16 * 5 * 5);
    CHECK(sample_std(he_w.data()) == doctest::Approx(std::sqrt(2.0 / 400.0)).epsilon(0.03));

    // dense with a linear output: Glorot, std = sqrt(2 / (fan_in + fan_out))
    Network<float> glorot("g", {LayerSpec::dense(100)}, {300}, 7);
    auto g_w = glorot.parameters()[0];
    REQUIRE(g_w.numel() == 30000);
    CHECK(sample_std(g_w.data()) == doctest::Approx(std::sqrt(2.0 / 400.0)).epsilon(0.03));

    // the activation scan skips shape-only layers but stops at the next
    // weighted layer, so conv -> flatten -> dense is Glorot for the conv
    Network<float> mid("m",
                       {LayerSpec::conv(64, 5, 1, 2), LayerSpec::flatten(),
                        LayerSpec::dense(4)},
                       {16, 8, 8}, 7);
    auto mid_w = mid.parameters()[0];
    const double glorot_std = std::sqrt(2.0 / (400.0 + 64 * 5 * 5));
    CHECK(sample_std(mid_w.data()) == doctest::Approx(glorot_std).epsilon(0.03));

    // biases start at zero
    for (float v : he.parameters()[1].data()) CHECK(v == 0.0f);
}

TEST_CASE("preset stacks produce the documented shapes") {
    const ad::Shape img{1, 32, 32};

    Network<float> enc("encoder", encoder_spec(img, 8), img, 3);
    CHECK(encoder_feature_dim(img, 8) == 256);  // 32->16->8->4->2, 64 channels at the top
    CHECK(enc.output_shape() == ad::Shape{256});

    Rng rng(99);
    auto x = Tensor<float>::zeros({2, 1, 32, 32});
    fill_uniform(rng, x, 0.0, 1.0);
    CHECK(enc.forward(x).shape() == ad::Shape{2, 256});

    Classifier<float> cls(img, 5);
    auto probs = cls.prob(x);
    CHECK(probs.shape() == ad::Shape{2, 1});
    for (float p : probs.data()) {
        CHECK(p > 0.0f);
        CHECK(p < 1.0f);
    }

    Predictor<float> pred(img, 2, 9);
    CHECK(pred.predict(x).shape() == ad::Shape{2, 2});
    CHECK(pred.out_dim() == 2);

    Generator<float> gen(img, 16, true, 11);
    auto f = gen.forward(x);
    CHECK(f.x_prime.shape() == x.shape());
    CHECK(f.mu.shape() == ad::Shape{2, 16});
    CHECK(f.log_var.shape() == ad::Shape{2, 16});
    for (float v : f.x_prime.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    CHECK_THROWS_AS(Generator<float>(img, 0, true, 1), ConfigError);
    CHECK_THROWS_AS(encoder_spec({1, 24, 24}, 8), ConfigError);   // not a power of two
    CHECK_THROWS_AS(encoder_spec({1, 32, 16}, 8), ConfigError);   // not square
    CHECK_THROWS_AS(encoder_spec({1, 4, 4}, 8), ConfigError);     // below the minimum
}

TEST_CASE("generator forward paths are deterministic and noise-aware") {
    const ad::Shape img{1, 8, 8};
    Generator<float> gen(img, 4, true, 7, 2);

    Rng rng(123);
    auto x = Tensor<float>::zeros({3, 1, 8, 8});
    fill_uniform(rng, x, 0.0, 1.0);

    auto f1 = gen.forward(x);
    auto f2 = gen.forward(x);
    CHECK(bitwise_equal(f1.x_prime, f2.x_prime));
    CHECK(bitwise_equal(f1.z, f1.mu));  // eps omitted: deterministic path

    // zero noise collapses to the deterministic path
    auto eps0 = Tensor<float>::zeros({3, 4});
    auto f3 = gen.forward(x, &eps0);
    CHECK(bitwise_equal(f3.x_prime, f1.x_prime));

    // fixed noise is reproducible, nonzero noise moves the latent
    auto eps = Tensor<float>::zeros({3, 4});
    fill_normal(rng, eps);
    auto f4 = gen.forward(x, &eps);
    auto f5 = gen.forward(x, &eps);
    CHECK(bitwise_equal(f4.z, f5.z));
    CHECK(!bitwise_equal(f4.z, f1.mu));

    auto bad = Tensor<float>::zeros({3, 5});
    CHECK_THROWS_AS(gen.forward(x, &bad), DimensionError);

    // decoder-only entry point, single latent and batched
    auto z1 = Tensor<float>::zeros({4});
    CHECK(gen.decode(z1).shape() == ad::Shape{1, 1, 8, 8});
    auto z2 = Tensor<float>::zeros({2, 4});
    auto dec = gen.decode(z2);
    CHECK(dec.shape() == ad::Shape{2, 1, 8, 8});
    for (float v : dec.data()) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }

    Generator<float> plain(img, 4, false, 7, 2);
    auto fp = plain.forward(x);
    CHECK(fp.x_prime.shape() == x.shape());
    CHECK(!fp.log_var.valid());
    CHECK_THROWS_AS(plain.decode(z1), UnsupportedError);
}

TEST_CASE("generator gradients match finite differences") {
    const ad::Shape img{1, 8, 8};
    Generator<double> gen(img, 4, true, 3, 2);

    Rng rng(17);
    auto target = Tensor<double>::zeros({1, 1, 8, 8});
    fill_uniform(rng, target, 0.2, 0.8);

    // latent-space objective, the quantity the counterfactual search descends
    auto z0 = Tensor<double>::zeros({4});
    fill_normal(rng, z0);
    const double rel_z = ad::grad_check<double>(
        [&](const Tensor<double>& z) { return ad::mse(gen.decode(z), target); }, z0);
    CHECK(rel_z < 1e-6);

    // image-space objective through the full encoder/decoder pass
    auto x0 = Tensor<double>::zeros({1, 1, 8, 8});
    fill_uniform(rng, x0, 0.2, 0.8);
    const double rel_x = ad::grad_check<double>(
        [&](const Tensor<double>& x) { return ad::mse(gen.forward(x).x_prime, target); }, x0);
    CHECK(rel_x < 1e-6);
}

TEST_CASE("kl divergence matches hand values and finite differences") {
    // standard normal input: zero divergence
    auto mu0 = Tensor<double>::zeros({2, 3});
    auto lv0 = Tensor<double>::zeros({2, 3});
    CHECK(kl_to_standard_normal(mu0, lv0).item() == 0.0);

    // single unit-mean coordinate: 1/2 (mu^2 + e^0 - 1 - 0) = 1/2
    auto mu1 = Tensor<double>::from({1, 1}, {1.0});
    auto lv1 = Tensor<double>::zeros({1, 1});
    CHECK(kl_to_standard_normal(mu1, lv1).item() == doctest::Approx(0.5).epsilon(1e-12));

    // the batch dimension averages: rows contribute 0.5 and 0
    auto mu2 = Tensor<double>::from({2, 1}, {1.0, 0.0});
    auto lv2 = Tensor<double>::zeros({2, 1});
    CHECK(kl_to_standard_normal(mu2, lv2).item() == doctest::Approx(0.25).epsilon(1e-12));

    // general value against a direct evaluation
    const double m = 0.3, l = -0.2;
    auto mu3 = Tensor<double>::from({1, 1}, {m});
    auto lv3 = Tensor<double>::from({1, 1}, {l});
    const double want = 0.5 * (m * m + std::exp(l) - 1.0 - l);
    CHECK(kl_to_standard_normal(mu3, lv3).item() == doctest::Approx(want).epsilon(1e-12));

    // gradients with respect to both arguments
    Rng rng(5);
    auto mu = Tensor<double>::zeros({2, 4});
    auto lv = Tensor<double>::zeros({2, 4});
    fill_normal(rng, mu);
    fill_uniform(rng, lv, -1.0, 1.0);
    CHECK(ad::grad_check<double>(
              [&](const Tensor<double>& m_) { return kl_to_standard_normal(m_, lv); }, mu) <
          1e-8);
    CHECK(ad::grad_check<double>(
              [&](const Tensor<double>& l_) { return kl_to_standard_normal(mu, l_); }, lv) <
          1e-8);

    auto narrow = Tensor<double>::zeros({2, 3});
    auto wide = Tensor<double>::zeros({2, 4});
    CHECK_THROWS_AS(kl_to_standard_normal(narrow, wide), DimensionError);
}

TEST_CASE("reparameterization scales noise by exp(log_var / 2)") {
    const ad::Shape img{1, 8, 8};
    Generator<float> gen(img, 4, true, 11, 2);

    // Pin the log-variance head to the constant ln(1/4), i.e. sigma = 1/2.
    auto lv_params = gen.logvar_head().parameters();
    REQUIRE(lv_params.size() == 2);
    for (auto& v : lv_params[0].data()) v = 0.0f;
    for (auto& v : lv_params[1].data()) v = std::log(0.25f);

    const std::size_t batch = 2500;
    Rng rng(77);
    auto x = Tensor<float>::zeros({batch, 1, 8, 8});
    fill_uniform(rng, x, 0.0, 1.0);
    auto eps = Tensor<float>::zeros({batch, 4});
    fill_normal(rng, eps);

    auto f = gen.forward(x, &eps);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(f.log_var.data()[i] == doctest::Approx(std::log(0.25)).epsilon(1e-6));
    }

    std::vector<float> delta(batch * 4);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        delta[i] = f.z.data()[i] - f.mu.data()[i];
    }
    double mean = 0.0;
    for (float d : delta) mean += d;
    mean /= static_cast<double>(delta.size());
    CHECK(std::abs(mean) < 0.02);
    CHECK(sample_std(delta) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("checkpoints round-trip bitwise") {
    Rng rng(31);

    SUBCASE("variational generator") {
        const std::string path = temp_path("nn_test_gen.cgen");
        Generator<float> gen({1, 8, 8}, 4, true, 21, 2);
        save_checkpoint(gen, path);
        CHECK(checkpoint_kind(path) == "generator");

        auto loaded = load_generator(path);
        CHECK(loaded.variational());
        CHECK(loaded.latent_dim() == 4);
        CHECK(loaded.image_shape() == ad::Shape{1, 8, 8});
        CHECK(loaded.hash() == gen.hash());

        auto x = Tensor<float>::zeros({2, 1, 8, 8});
        fill_uniform(rng, x, 0.0, 1.0);
        auto a = gen.forward(x), b = loaded.forward(x);
        CHECK(bitwise_equal(a.x_prime, b.x_prime));
        CHECK(bitwise_equal(a.mu, b.mu));
        CHECK(bitwise_equal(a.log_var, b.log_var));
        std::filesystem::remove(path);
    }

    SUBCASE("plain autoencoder generator") {
        const std::string path = temp_path("nn_test_ae.cgen");
        Generator<float> gen({1, 8, 8}, 4, false, 22, 2);
        save_checkpoint(gen, path);
        auto loaded = load_generator(path);
        CHECK(!loaded.variational());
        CHECK(loaded.hash() == gen.hash());
        std::filesystem::remove(path);
    }

    SUBCASE("classifier") {
        const std::string path = temp_path("nn_test_cls.cgen");
        Classifier<float> cls({1, 16, 16}, 5, 4);
        save_checkpoint(cls, path);
        CHECK(checkpoint_kind(path) == "classifier");
        auto loaded = load_classifier(path);
        CHECK(loaded.hash() == cls.hash());

        auto x = Tensor<float>::zeros({3, 1, 16, 16});
        fill_uniform(rng, x, 0.0, 1.0);
        CHECK(bitwise_equal(cls.prob(x), loaded.prob(x)));
        std::filesystem::remove(path);
    }

    SUBCASE("predictor") {
        const std::string path = temp_path("nn_test_pred.cgen");
        Predictor<float> pred({1, 16, 16}, 2, 9, 4);
        save_checkpoint(pred, path);
        CHECK(checkpoint_kind(path) == "predictor");
        auto loaded = load_predictor(path);
        CHECK(loaded.out_dim() == 2);
        CHECK(loaded.hash() == pred.hash());

        auto x = Tensor<float>::zeros({3, 1, 16, 16});
        fill_uniform(rng, x, 0.0, 1.0);
        CHECK(bitwise_equal(pred.predict(x), loaded.predict(x)));
        std::filesystem::remove(path);
    }
}

TEST_CASE("corrupt checkpoints are rejected with the right errors") {
    const std::string path = temp_path("nn_test_base.cgen");
    const std::string bad = temp_path("nn_test_bad.cgen");
    Predictor<float> pred({1, 16, 16}, 2, 9, 4);
    save_checkpoint(pred, path);
    const std::string bytes = slurp(path);

    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_checkpoint(temp_path("nn_test_nowhere.cgen")), IoError);
    }

    SUBCASE("truncated preamble") {
        spit(bad, bytes.substr(0, 10));
        CHECK_THROWS_WITH_AS(read_checkpoint(bad), doctest::Contains("truncated preamble"),
                             FormatError);
    }

    SUBCASE("bad magic") {
        std::string t = bytes;
        t[0] = 'X';
        spit(bad, t);
        CHECK_THROWS_WITH_AS(read_checkpoint(bad), doctest::Contains("bad magic"), FormatError);
    }

    SUBCASE("unsupported version") {
        std::string t = bytes;
        t[4] = 2;
        spit(bad, t);
        CHECK_THROWS_WITH_AS(read_checkpoint(bad), doctest::Contains("unsupported version 2"),
                             VersionError);
    }

    SUBCASE("header longer than the file") {
        std::string t = bytes;
        t[8] = static_cast<char>(0xff);
        t[9] = static_cast<char>(0xff);
        t[10] = static_cast<char>(0xff);
        spit(bad, t);
        CHECK_THROWS_WITH_AS(read_checkpoint(bad), doctest::Contains("truncated header"),
                             FormatError);
    }

    SUBCASE("payload shorter than the tensor total") {
        spit(bad, bytes.substr(0, bytes.size() - 4));
        CHECK_THROWS_WITH_AS(read_checkpoint(bad), doctest::Contains("does not match tensor"),
                             FormatError);
    }

    SUBCASE("tensor name does not match the rebuilt model") {
        std::string t = bytes;
        const std::size_t pos = t.find("predictor.w0");
        REQUIRE(pos != std::string::npos);
        t.replace(pos, 12, "predictor.q0");  // same length keeps the header size
        spit(bad, t);
        CHECK_THROWS_AS(load_predictor(bad), FormatError);
    }

    SUBCASE("kind mismatch") {
        CHECK_THROWS_WITH_AS(load_generator(path),
                             doctest::Contains("holds a predictor, expected a generator"),
                             ConfigError);
        CHECK_THROWS_AS(load_classifier(path), ConfigError);
    }

    std::filesystem::remove(path);
    std::filesystem::remove(bad);
}

TEST_CASE("weight hash tracks parameter bytes only") {
    Classifier<float> cls({1, 16, 16}, 5, 4);
    const std::uint64_t h0 = cls.hash();

    // hashing is over values, not gradient or trainability state
    cls.set_trainable(false);
    CHECK(cls.hash() == h0);
    cls.set_trainable(true);

    auto w = cls.parameters()[0];
    const float saved = w.data()[0];
    w.data()[0] = saved + 0.25f;
    CHECK(cls.hash() != h0);
    w.data()[0] = saved;
    CHECK(cls.hash() == h0);
}
