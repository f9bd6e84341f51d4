#include "cgen/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "cgen/cgen.hpp"
#include "cgen/checkpoint.hpp"
#include "cgen/errors.hpp"
#include "cgen/pgm.hpp"
#include "cgen/rng.hpp"
#include "cgen/robustness.hpp"
#include "cgen/shapes.hpp"
#include "cgen/stones.hpp"

namespace fs = std::filesystem;

namespace cgen::cli {

using ad::Shape;
using ad::Tensor;

namespace {

std::string fmt17(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_real(const std::string& text, const std::string& context) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigError(context + ": '" + text + "' is not a number");
    }
    if (used != text.size()) throw ConfigError(context + ": '" + text + "' is not a number");
    return v;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return parts;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory '" + dir + "'");
    }
}

std::string image_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05zu.pgm", index);
    return buf;
}

// [n, 1, H, W] -> row i as [1, H, W]
Tensor<float> slice_image(const Tensor<float>& images, std::size_t i) {
    const std::size_t per = images.numel() / images.dim(0);
    auto out = Tensor<float>::zeros({images.dim(1), images.dim(2), images.dim(3)});
    const auto src = images.data();
    auto dst = out.data();
    for (std::size_t j = 0; j < per; ++j) dst[j] = src[i * per + j];
    return out;
}

Tensor<float> gather_images(const Tensor<float>& images, const std::vector<std::size_t>& idx) {
    const std::size_t per = images.numel() / images.dim(0);
    auto out = Tensor<float>::zeros({idx.size(), images.dim(1), images.dim(2), images.dim(3)});
    const auto src = images.data();
    auto dst = out.data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t j = 0; j < per; ++j) dst[r * per + j] = src[idx[r] * per + j];
    }
    return out;
}

Shape image_shape_of(const Tensor<float>& images) {
    return {images.dim(1), images.dim(2), images.dim(3)};
}

// Applies --set section.key=value overrides on top of a parsed config file.
io::Config load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    io::Config cfg = io::Config::parse_file(path);
    for (const auto& ov : overrides) {
        const std::size_t eq = ov.find('=');
        const std::size_t dot = ov.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 ||
            dot + 1 == eq) {
            throw ConfigError("override '" + ov + "' must look like section.key=value");
        }
        cfg.set(ov.substr(0, dot), ov.substr(dot + 1, eq - dot - 1), ov.substr(eq + 1));
    }
    return cfg;
}

// Reads config values while recording the final (defaulted) value, so the
// written config is fully resolved rather than a copy of the input.
struct ResolvedReader {
    explicit ResolvedReader(const io::Config& cfg) : cfg(cfg), resolved(cfg) {}

    std::string str(const std::string& sec, const std::string& key) {
        const std::string v = cfg.get(sec, key);
        resolved.set(sec, key, v);
        return v;
    }
    std::string str_or(const std::string& sec, const std::string& key,
                       const std::string& fallback) {
        const std::string v = cfg.get_or(sec, key, fallback);
        resolved.set(sec, key, v);
        return v;
    }
    long long int_or(const std::string& sec, const std::string& key, long long fallback) {
        const long long v = cfg.get_int_or(sec, key, fallback);
        resolved.set(sec, key, std::to_string(v));
        return v;
    }
    double real_or(const std::string& sec, const std::string& key, double fallback) {
        const double v = cfg.get_real_or(sec, key, fallback);
        resolved.set(sec, key, fmt17(v));
        return v;
    }
    bool bool_or(const std::string& sec, const std::string& key, bool fallback) {
        const bool v = cfg.get_bool_or(sec, key, fallback);
        resolved.set(sec, key, v ? "true" : "false");
        return v;
    }
    std::size_t count(const std::string& sec, const std::string& key, long long fallback,
                      const std::string& what) {
        const long long v = int_or(sec, key, fallback);
        if (v <= 0) throw ConfigError(sec + "." + key + " (" + what + ") must be positive");
        return static_cast<std::size_t>(v);
    }

    const io::Config& cfg;
    io::Config resolved;
};

void echo_warnings(const TrainLog& log, std::ostream& err) {
    for (const auto& w : log.warnings) err << "warning: " << w << "\n";
}

// Indices whose class label equals `cls`; "all" keeps everything. Class
// filters only make sense on class-labeled datasets.
std::vector<std::size_t> select_class(const LoadedDataset& data, const std::string& cls) {
    std::vector<std::size_t> idx;
    if (cls == "all") {
        idx.resize(data.labels.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return idx;
    }
    if (data.env != "shapes") {
        throw ConfigError("class filters need a class-labeled dataset (env shapes), not '" +
                          data.env + "'");
    }
    const double want = parse_real(cls, "class filter");
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        if (data.labels[i][0] == want) idx.push_back(i);
    }
    if (idx.empty()) throw ValidationError("no samples with class " + cls + " in the dataset");
    return idx;
}

Tensor<float> labels_tensor(const LoadedDataset& data) {
    const std::size_t n = data.labels.size();
    const std::size_t w = n == 0 ? 0 : data.labels[0].size();
    std::vector<float> flat;
    flat.reserve(n * w);
    for (const auto& row : data.labels) {
        for (const double v : row) flat.push_back(static_cast<float>(v));
    }
    return Tensor<float>::from({n, w}, flat);
}

void require_same_image_shape(const Shape& data_shape, const Shape& model_shape,
                              const std::string& model) {
    if (!ad::same_shape(data_shape, model_shape)) {
        throw DimensionError("dataset images " + ad::shape_str(data_shape) + " do not match the " +
                             model + " input " + ad::shape_str(model_shape));
    }
}

// --------------------------------------------------------------------------
// gen-data
// --------------------------------------------------------------------------

struct GenDataArgs {
    std::string env;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string complexity = "full";
    bool complexity_given = false;
    bool augment = false;
    std::string out;
};

void cmd_gen_data(const GenDataArgs& a) {
    if (a.env != "shapes" && a.env != "stones" && a.env != "nav") {
        throw ConfigError("unknown environment '" + a.env +
                          "' (allowed: shapes, stones, nav)");
    }
    if (a.count == 0) throw ConfigError("--count must be positive");
    if (a.env != "nav" && a.complexity_given) {
        throw ConfigError("--complexity applies to the nav environment only");
    }
    if (a.env != "stones" && a.augment) {
        throw ConfigError("--augment applies to the stones environment only");
    }
    ensure_dir(a.out);

    io::Config manifest;
    manifest.set("dataset", "env", a.env);
    manifest.set("dataset", "count", std::to_string(a.count));
    manifest.set("dataset", "seed", std::to_string(a.seed));

    io::Config resolved;
    resolved.set("gen-data", "env", a.env);
    resolved.set("gen-data", "count", std::to_string(a.count));
    resolved.set("gen-data", "seed", std::to_string(a.seed));

    std::ostringstream labels;
    const auto file_entry = [&](std::size_t i) {
        const std::string name = image_name(i);
        manifest.set("files", std::to_string(i), name);
        return name;
    };

    if (a.env == "shapes") {
        const auto ds = env::gen_shapes_dataset(a.count, a.seed);
        manifest.set("dataset", "image_size", std::to_string(env::kShapesSize));
        labels << "index,file,class_id\n";
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const std::string name = file_entry(i);
            io::write_pgm(a.out + "/" + name, ds[i].image);
            labels << i << "," << name << "," << ds[i].class_id << "\n";
        }
    } else if (a.env == "stones") {
        const auto ds = env::gen_stones_dataset(a.count, a.seed, a.augment);
        manifest.set("dataset", "image_size", std::to_string(env::kStonesSize));
        resolved.set("gen-data", "augment", a.augment ? "true" : "false");
        labels << "index,file,residual\n";
        for (std::size_t i = 0; i < a.count; ++i) {
            const std::string name = file_entry(i);
            io::write_pgm(a.out + "/" + name, slice_image(ds.images, i));
            labels << i << "," << name << "," << fmt17(ds.residuals.data()[i]) << "\n";
        }
    } else {
        const env::Complexity complexity = env::parse_complexity(a.complexity);
        const auto ds = env::gen_nav_dataset(complexity, a.count, a.seed);
        manifest.set("dataset", "image_size", std::to_string(env::kNavSize));
        manifest.set("dataset", "complexity", env::complexity_name(complexity));
        resolved.set("gen-data", "complexity", env::complexity_name(complexity));
        labels << "index,file";
        for (std::size_t k = 0; k < 10; ++k) labels << ",y" << k;
        labels << "\n";
        for (std::size_t i = 0; i < a.count; ++i) {
            const std::string name = file_entry(i);
            io::write_pgm(a.out + "/" + name, slice_image(ds.images, i));
            labels << i << "," << name;
            for (std::size_t k = 0; k < 10; ++k) {
                labels << "," << fmt17(ds.labels.data()[i * 10 + k]);
            }
            labels << "\n";
        }
        write_nav_scenes(ds.scenes, a.out + "/scenes.txt");
    }
    resolved.set("gen-data", "out", a.out);

    std::ofstream ls(a.out + "/labels.csv", std::ios::trunc);
    if (!(ls << labels.str())) throw IoError("cannot write '" + a.out + "/labels.csv'");
    manifest.write_file(a.out + "/manifest.txt");
    resolved.write_file(a.out + "/" + kResolvedConfigName);
}

// --------------------------------------------------------------------------
// pretrain
// --------------------------------------------------------------------------

const std::map<std::string, std::set<std::string>> kPretrainKeys = {
    {"run", {"seed", "out"}},
    {"data", {"dir", "class"}},
    {"model", {"kind", "latent_dim", "base_width", "variational", "positive_class"}},
    {"train", {"epochs", "batch", "lr", "val_fraction", "val_threshold", "kl_weight"}},
};

void cmd_pretrain(const io::Config& cfg, std::ostream& err) {
    cfg.require_known(kPretrainKeys);
    ResolvedReader r(cfg);

    const std::string out = r.str("run", "out");
    const auto seed = static_cast<std::uint64_t>(r.int_or("run", "seed", 0));
    const std::string kind = r.str_or("model", "kind", "generator");
    const auto base_width = r.count("model", "base_width", 8, "channel width");

    const LoadedDataset data = load_dataset(r.str("data", "dir"));
    const Shape image_shape = image_shape_of(data.images);
    ensure_dir(out);

    if (kind == "generator") {
        const auto latent = r.count("model", "latent_dim", 8, "latent dimension");
        const bool variational = r.bool_or("model", "variational", true);
        const auto keep = select_class(data, r.str_or("data", "class", "all"));
        const auto images = gather_images(data.images, keep);

        nn::Generator<float> g(image_shape, latent, variational,
                               derive_seed(seed, "generator-init"), base_width);
        PretrainConfig pc;
        pc.epochs = r.count("train", "epochs", 30, "epochs");
        pc.batch_size = r.count("train", "batch", 16, "batch size");
        pc.lr = r.real_or("train", "lr", 1e-3);
        pc.seed = derive_seed(seed, "pretrain");
        pc.val_fraction = r.real_or("train", "val_fraction", 0.1);
        pc.val_threshold = r.real_or("train", "val_threshold", 0.05);
        pc.kl_weight = r.real_or("train", "kl_weight", 1e-3);

        const TrainLog log = pretrain_generator(g, images, pc);
        echo_warnings(log, err);
        nn::save_checkpoint(g, out + "/generator.ck");
        write_training_csv(out + "/train_log.csv", log);
    } else if (kind == "classifier") {
        const long long positive = r.int_or("model", "positive_class", 1);
        if (data.env != "shapes") {
            throw ConfigError("classifier pretraining needs a class-labeled dataset (env shapes)");
        }
        std::vector<std::size_t> pos, neg;
        for (std::size_t i = 0; i < data.labels.size(); ++i) {
            (data.labels[i][0] == static_cast<double>(positive) ? pos : neg).push_back(i);
        }
        nn::Classifier<float> c(image_shape, derive_seed(seed, "classifier-init"), base_width);
        SupervisedConfig sc;
        sc.epochs = r.count("train", "epochs", 20, "epochs");
        sc.batch_size = r.count("train", "batch", 16, "batch size");
        sc.lr = r.real_or("train", "lr", 1e-3);
        sc.seed = derive_seed(seed, "classifier");

        const TrainLog log = train_classifier(c, gather_images(data.images, pos),
                                              gather_images(data.images, neg), sc);
        echo_warnings(log, err);
        nn::save_checkpoint(c, out + "/classifier.ck");
        write_training_csv(out + "/train_log.csv", log);
    } else {
        throw ConfigError("model.kind must be generator or classifier, got '" + kind + "'");
    }
    r.resolved.write_file(out + "/" + kResolvedConfigName);
}

// --------------------------------------------------------------------------
// train-predictor
// --------------------------------------------------------------------------

const std::map<std::string, std::set<std::string>> kPredictorKeys = {
    {"run", {"seed", "out"}},
    {"data", {"dir"}},
    {"model", {"base_width"}},
    {"train", {"epochs", "batch", "lr"}},
};

void cmd_train_predictor(const io::Config& cfg, std::ostream& err) {
    cfg.require_known(kPredictorKeys);
    ResolvedReader r(cfg);

    const std::string out = r.str("run", "out");
    const auto seed = static_cast<std::uint64_t>(r.int_or("run", "seed", 0));
    const LoadedDataset data = load_dataset(r.str("data", "dir"));
    const auto targets = labels_tensor(data);
    if (targets.dim(1) == 0) throw FormatError("dataset labels are empty");

    nn::Predictor<float> p(image_shape_of(data.images), targets.dim(1),
                           derive_seed(seed, "predictor-init"),
                           r.count("model", "base_width", 8, "channel width"));
    SupervisedConfig sc;
    sc.epochs = r.count("train", "epochs", 20, "epochs");
    sc.batch_size = r.count("train", "batch", 16, "batch size");
    sc.lr = r.real_or("train", "lr", 1e-3);
    sc.seed = derive_seed(seed, "predictor");

    const TrainLog log = train_predictor(p, data.images, targets, sc);
    echo_warnings(log, err);
    ensure_dir(out);
    nn::save_checkpoint(p, out + "/predictor.ck");
    write_training_csv(out + "/train_log.csv", log);
    r.resolved.write_file(out + "/" + kResolvedConfigName);
}

// --------------------------------------------------------------------------
// train-cgen
// --------------------------------------------------------------------------

const std::map<std::string, std::set<std::string>> kCgenKeys = {
    {"run", {"seed", "out"}},
    {"data", {"dir", "class", "target_class", "goal"}},
    {"models", {"generator", "classifier", "predictor", "classifier_width"}},
    {"loss", {"mode", "alpha", "beta", "gamma"}},
    {"train", {"epochs", "batch", "lr_generator", "lr_classifier", "gen_per_cls"}},
};

CGenWeights read_weights(ResolvedReader& r) {
    const std::string mode = r.str("loss", "mode");
    CGenWeights w;
    if (mode == "classification") {
        w.mode = CGenMode::Classification;
        w.alpha = r.real_or("loss", "alpha", 0.8);
    } else if (mode == "regression") {
        w.mode = CGenMode::Regression;
        w.alpha = r.real_or("loss", "alpha", 0.8);
        w.beta = r.real_or("loss", "beta", 0.1);
        w.gamma = r.real_or("loss", "gamma", 0.1);
    } else {
        throw ConfigError("loss.mode must be classification or regression, got '" + mode + "'");
    }
    validate_weights(w);
    return w;
}

std::string require_checkpoint(const std::string& path, const std::string& what,
                               const std::string& hint) {
    if (path.empty()) {
        throw MissingPrerequisite("no " + what + " checkpoint configured; " + hint);
    }
    if (!fs::exists(path)) {
        throw MissingPrerequisite(what + " checkpoint '" + path + "' not found; " + hint);
    }
    return path;
}

void cmd_train_cgen(const io::Config& cfg, std::ostream& err) {
    cfg.require_known(kCgenKeys);
    ResolvedReader r(cfg);

    const std::string out = r.str("run", "out");
    const auto seed = static_cast<std::uint64_t>(r.int_or("run", "seed", 0));
    const CGenWeights weights = read_weights(r);
    const LoadedDataset data = load_dataset(r.str("data", "dir"));

    auto g = nn::load_generator(require_checkpoint(r.str_or("models", "generator", ""),
                                                   "generator", "run pretrain first"));
    require_same_image_shape(image_shape_of(data.images), g.image_shape(), "generator");

    const std::string classifier_path = r.str_or("models", "classifier", "");
    bool classifier_pretrained = !classifier_path.empty();
    nn::Classifier<float> c;
    if (classifier_pretrained) {
        c = nn::load_classifier(
            require_checkpoint(classifier_path, "classifier", "run pretrain first"));
    } else {
        c = nn::Classifier<float>(g.image_shape(), derive_seed(seed, "classifier-init"),
                                  r.count("models", "classifier_width", 8, "channel width"));
    }

    TrainConfig tc;
    tc.epochs = r.count("train", "epochs", 20, "epochs");
    tc.batch_size = r.count("train", "batch", 16, "batch size");
    tc.lr_generator = r.real_or("train", "lr_generator", 1e-3);
    tc.lr_classifier = r.real_or("train", "lr_classifier", 1e-3);
    tc.seed = derive_seed(seed, "cgen");
    tc.weights = weights;
    tc.gen_per_cls = r.count("train", "gen_per_cls", 1, "generator epochs per classifier epoch");
    tc.classifier_pretrained = classifier_pretrained;

    ensure_dir(out);
    TrainLog log;
    if (weights.mode == CGenMode::Classification) {
        const auto inputs = select_class(data, r.str_or("data", "class", "0"));
        const auto targets = select_class(data, r.str_or("data", "target_class", "1"));
        log = train_cgen_classification(g, c, gather_images(data.images, inputs),
                                        gather_images(data.images, targets), tc);
    } else {
        auto p = nn::load_predictor(require_checkpoint(r.str_or("models", "predictor", ""),
                                                       "predictor", "run train-predictor first"));
        p.set_frozen(true);
        const std::string goal_spec = r.str_or("data", "goal", "labels");
        Tensor<float> goals;
        if (goal_spec == "labels") {
            goals = labels_tensor(data);
        } else {
            std::vector<float> row;
            for (const auto& tok : split(goal_spec, ',')) {
                row.push_back(static_cast<float>(parse_real(tok, "data.goal")));
            }
            std::vector<float> flat;
            flat.reserve(row.size() * data.images.dim(0));
            for (std::size_t i = 0; i < data.images.dim(0); ++i) {
                flat.insert(flat.end(), row.begin(), row.end());
            }
            goals = Tensor<float>::from({data.images.dim(0), row.size()}, flat);
        }
        log = train_cgen_regression(g, c, p, data.images, goals, data.images, tc);
        // the frozen surrogate rides along so the output directory is a
        // complete model set; bytes match the input checkpoint exactly
        nn::save_checkpoint(p, out + "/predictor.ck");
    }
    echo_warnings(log, err);
    nn::save_checkpoint(g, out + "/generator.ck");
    nn::save_checkpoint(c, out + "/classifier.ck");
    write_training_csv(out + "/train_log.csv", log);
    r.resolved.write_file(out + "/" + kResolvedConfigName);
}

// --------------------------------------------------------------------------
// counterfactual
// --------------------------------------------------------------------------

struct CounterfactualArgs {
    std::string model, input, goal, out;
    bool latent = false;
    std::size_t steps = 500;
    double lr = 0.05;
};

struct GoalSpec {
    bool classification = false;
    std::vector<double> target;
};

GoalSpec parse_goal(const std::string& spec) {
    if (spec == "class") return {true, {}};
    GoalSpec g;
    if (spec.rfind("angle:", 0) == 0) {
        const auto a = env::goal_from_angle(parse_real(spec.substr(6), "--goal angle"));
        g.target.assign(a.begin(), a.end());
        return g;
    }
    for (const auto& tok : split(spec, ',')) {
        g.target.push_back(parse_real(tok, "--goal"));
    }
    if (g.target.empty()) {
        throw ConfigError("--goal must be 'class', 'angle:<deg>', or a comma-separated vector");
    }
    return g;
}

// The model directory written by train-cgen: checkpoints plus the resolved
// config the losses were trained with.
struct ModelDir {
    nn::Generator<float> g;
    nn::Classifier<float> c;
    nn::Predictor<float> p;  // regression only
    CGenWeights weights;
};

// `need_predictor` is false for the robustness command, which swaps in the
// controllers under comparison and never touches the training-time surrogate.
ModelDir load_model_dir(const std::string& dir, bool need_predictor = true) {
    const std::string cfg_path = dir + "/" + kResolvedConfigName;
    if (!fs::exists(cfg_path)) {
        throw MissingPrerequisite("model config '" + cfg_path + "' not found; run train-cgen first");
    }
    const io::Config mc = io::Config::parse_file(cfg_path);

    ModelDir m;
    const std::string mode = mc.get("loss", "mode");
    if (mode == "classification") {
        m.weights.mode = CGenMode::Classification;
        m.weights.alpha = mc.get_real("loss", "alpha");
    } else if (mode == "regression") {
        m.weights.mode = CGenMode::Regression;
        m.weights.alpha = mc.get_real("loss", "alpha");
        m.weights.beta = mc.get_real("loss", "beta");
        m.weights.gamma = mc.get_real("loss", "gamma");
    } else {
        throw ConfigError("model config '" + cfg_path + "' has unknown loss.mode '" + mode + "'");
    }

    m.g = nn::load_generator(
        require_checkpoint(dir + "/generator.ck", "generator", "run train-cgen first"));
    m.c = nn::load_classifier(
        require_checkpoint(dir + "/classifier.ck", "classifier", "run train-cgen first"));
    if (m.weights.mode == CGenMode::Regression && need_predictor) {
        m.p = nn::load_predictor(
            require_checkpoint(dir + "/predictor.ck", "predictor", "run train-cgen first"));
        m.p.set_frozen(true);
    }
    return m;
}

void cmd_counterfactual(const CounterfactualArgs& a) {
    const ModelDir m = load_model_dir(a.model);
    const GoalSpec goal = parse_goal(a.goal);
    if (m.weights.mode == CGenMode::Classification && !goal.classification) {
        throw ConfigError("this model explains a classifier; --goal must be 'class'");
    }
    if (m.weights.mode == CGenMode::Regression && goal.classification) {
        throw ConfigError("this model targets a controller; --goal must be a vector or angle");
    }

    if (!fs::exists(a.input)) {
        throw MissingPrerequisite("input image '" + a.input + "' not found");
    }
    const auto x = io::read_pgm(a.input);

    Tensor<float> t_r;
    if (!goal.classification) {
        std::vector<float> vals(goal.target.begin(), goal.target.end());
        t_r = Tensor<float>::from({1, vals.size()}, vals);
    }

    CounterfactualResult<float> res;
    if (a.latent) {
        if (m.weights.mode != CGenMode::Regression) {
            throw ConfigError("--latent searches a controller goal; this model explains a "
                              "classifier");
        }
        LatentSearchConfig sc;
        sc.max_steps = a.steps;
        sc.lr = a.lr;
        sc.weights = m.weights;
        res = latent_counterfactual_search(m.g, m.c, m.p, x, t_r, sc);
    } else if (m.weights.mode == CGenMode::Regression) {
        res = make_counterfactual<float>(m.g, m.c, &m.p, x, &t_r, m.weights);
    } else {
        res = make_counterfactual<float>(m.g, m.c, nullptr, x, nullptr, m.weights);
    }

    ensure_dir(a.out);
    io::write_pgm(a.out + "/original.pgm", res.original);
    io::write_pgm(a.out + "/counterfactual.pgm", res.counterfactual);
    write_diff_pgm(res.original, res.counterfactual, a.out + "/diff.pgm");

    io::Config record;
    record.set("losses", "l_g", fmt17(res.l_g));
    record.set("losses", "l_c", fmt17(res.l_c));
    record.set("losses", "l_p", fmt17(res.l_p));
    record.set("losses", "l_total", fmt17(res.l_total));
    record.set("losses", "classifier_prob", fmt17(res.classifier_prob));
    record.set("weights", "mode",
               m.weights.mode == CGenMode::Classification ? "classification" : "regression");
    record.set("weights", "alpha", fmt17(m.weights.alpha));
    record.set("weights", "beta", fmt17(m.weights.beta));
    record.set("weights", "gamma", fmt17(m.weights.gamma));
    record.set("search", "iterations", std::to_string(res.iterations));
    record.set("search", "converged", res.converged ? "true" : "false");
    record.set("search", "variables_per_step", std::to_string(res.variables_per_step));
    if (!res.prediction.empty()) {
        std::string pred;
        for (std::size_t i = 0; i < res.prediction.size(); ++i) {
            if (i) pred += ",";
            pred += fmt17(res.prediction[i]);
        }
        record.set("search", "prediction", pred);
    }
    record.write_file(a.out + "/losses.txt");

    io::Config resolved;
    resolved.set("counterfactual", "model", a.model);
    resolved.set("counterfactual", "input", a.input);
    resolved.set("counterfactual", "goal", a.goal);
    resolved.set("counterfactual", "latent", a.latent ? "true" : "false");
    resolved.set("counterfactual", "steps", std::to_string(a.steps));
    resolved.set("counterfactual", "lr", fmt17(a.lr));
    resolved.set("counterfactual", "out", a.out);
    resolved.write_file(a.out + "/" + kResolvedConfigName);
}

// --------------------------------------------------------------------------
// robustness
// --------------------------------------------------------------------------

struct RobustnessArgs {
    std::string model, scenarios, out;
    std::vector<std::string> controllers;
    std::string goals = "-45,-30,-15,0,15,30,45";
    std::size_t trials = 20;
    double epsilon = 0.1;
    double eta_step = 0.01;
    double eta_max = 2.0;
    std::size_t steps = 60;
    double lr = 0.05;
    std::size_t min_barriers = 3;
    std::uint64_t seed = 0;
};

void cmd_robustness(const RobustnessArgs& a, std::ostream& out, std::ostream& err) {
    const ModelDir m = load_model_dir(a.model, /*need_predictor=*/false);
    if (m.weights.mode != CGenMode::Regression) {
        throw ConfigError("robustness comparison needs a regression-mode model directory");
    }

    // controller checkpoints; unreadable or broken files surface as I/O and
    // format errors rather than missing prerequisites
    std::vector<nn::Predictor<float>> loaded;
    loaded.reserve(a.controllers.size());
    std::vector<NamedController> named;
    for (const auto& path : a.controllers) {
        loaded.push_back(nn::load_predictor(path));
        loaded.back().set_frozen(true);
        named.push_back({fs::path(path).stem().string(), &loaded.back()});
    }

    const auto scenes = read_nav_scenes(a.scenarios + "/scenes.txt");

    CompareConfig cc;
    cc.min_barrier_scenes = a.min_barriers;
    cc.goals_deg.clear();
    for (const auto& tok : split(a.goals, ',')) {
        cc.goals_deg.push_back(parse_real(tok, "--goals"));
    }
    cc.search.max_steps = a.steps;
    cc.search.lr = a.lr;
    cc.search.weights = m.weights;
    cc.probe.epsilon = a.epsilon;
    cc.probe.eta_step = a.eta_step;
    cc.probe.eta_max = a.eta_max;
    cc.probe.trials = a.trials;
    cc.probe.seed = derive_seed(a.seed, "probe");

    const RobustnessReport report = robustness_compare(m.g, m.c, named, cc, &scenes);
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";

    ensure_dir(a.out);
    write_robustness_csv(a.out + "/report.csv", report);
    const auto heatmaps = emit_heatmaps(report, a.out + "/heatmap");
    write_robustness_summary(a.out + "/summary.txt", report, heatmaps);

    io::Config resolved;
    resolved.set("robustness", "model", a.model);
    std::string ctls;
    for (std::size_t i = 0; i < a.controllers.size(); ++i) {
        if (i) ctls += " ";
        ctls += a.controllers[i];
    }
    resolved.set("robustness", "controllers", ctls);
    resolved.set("robustness", "scenarios", a.scenarios);
    resolved.set("robustness", "goals", a.goals);
    resolved.set("robustness", "trials", std::to_string(a.trials));
    resolved.set("robustness", "epsilon", fmt17(a.epsilon));
    resolved.set("robustness", "eta_step", fmt17(a.eta_step));
    resolved.set("robustness", "eta_max", fmt17(a.eta_max));
    resolved.set("robustness", "steps", std::to_string(a.steps));
    resolved.set("robustness", "lr", fmt17(a.lr));
    resolved.set("robustness", "min_barriers", std::to_string(a.min_barriers));
    resolved.set("robustness", "seed", std::to_string(a.seed));
    resolved.set("robustness", "out", a.out);
    resolved.write_file(a.out + "/" + kResolvedConfigName);

    // the verdicts are data, not errors: report and exit clean either way
    out << "ordering (mean l_total non-decreasing): " << (report.ordering_ok ? "PASS" : "FAIL")
        << "\n";
    out << "barrier scenes (second controller loses to first): "
        << (report.barrier_ok ? "PASS" : "FAIL") << "\n";
    out << "noise medians within factor 2: " << (report.noise_similar ? "PASS" : "FAIL") << "\n";
}

}  // namespace

// --------------------------------------------------------------------------
// shared artifact formats
// --------------------------------------------------------------------------

LoadedDataset load_dataset(const std::string& dir) {
    const std::string manifest_path = dir + "/manifest.txt";
    if (!fs::exists(manifest_path)) {
        throw MissingPrerequisite("dataset manifest '" + manifest_path +
                                  "' not found; run gen-data first");
    }
    const io::Config manifest = io::Config::parse_file(manifest_path);

    LoadedDataset data;
    data.env = manifest.get("dataset", "env");
    const auto count = static_cast<std::size_t>(manifest.get_int("dataset", "count"));

    for (const auto& [name, entries] : manifest.sections()) {
        if (name != "files") continue;
        for (const auto& [idx, file] : entries) {
            (void)idx;
            data.files.push_back(file);
        }
    }
    if (data.files.size() != count) {
        throw FormatError("manifest '" + manifest_path + "' lists " +
                          std::to_string(data.files.size()) + " files, dataset count is " +
                          std::to_string(count));
    }

    const std::string labels_path = dir + "/labels.csv";
    if (!fs::exists(labels_path)) {
        throw MissingPrerequisite("labels file '" + labels_path +
                                  "' not found; run gen-data first");
    }
    std::ifstream ls(labels_path);
    if (!ls) throw IoError("cannot open '" + labels_path + "' for reading");
    std::string line;
    if (!std::getline(ls, line)) throw FormatError("labels file '" + labels_path + "' is empty");
    while (std::getline(ls, line)) {
        if (line.empty()) continue;
        const auto cols = split(line, ',');
        if (cols.size() < 3) {
            throw FormatError("labels file '" + labels_path + "': short row '" + line + "'");
        }
        std::vector<double> row;
        for (std::size_t i = 2; i < cols.size(); ++i) {
            row.push_back(parse_real(cols[i], "labels file '" + labels_path + "'"));
        }
        data.labels.push_back(std::move(row));
    }
    if (data.labels.size() != count) {
        throw FormatError("labels file '" + labels_path + "' holds " +
                          std::to_string(data.labels.size()) + " rows, dataset count is " +
                          std::to_string(count));
    }
    for (const auto& row : data.labels) {
        if (row.size() != data.labels[0].size()) {
            throw FormatError("labels file '" + labels_path + "' has ragged rows");
        }
    }

    for (std::size_t i = 0; i < data.files.size(); ++i) {
        const auto img = io::read_pgm(dir + "/" + data.files[i]);
        if (i == 0) {
            data.images = Tensor<float>::zeros({count, img.dim(0), img.dim(1), img.dim(2)});
        } else if (!ad::same_shape(image_shape_of(data.images), img.shape())) {
            throw FormatError("dataset image '" + data.files[i] + "' shape " +
                              ad::shape_str(img.shape()) + " differs from the first image");
        }
        const auto src = img.data();
        auto dst = data.images.data();
        for (std::size_t j = 0; j < img.numel(); ++j) dst[i * img.numel() + j] = src[j];
    }
    return data;
}

void write_nav_scenes(const std::vector<env::NavScene>& scenes, const std::string& path) {
    io::Config cfg;
    cfg.set("scenes", "count", std::to_string(scenes.size()));
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        const std::string sec = "scene" + std::to_string(i);
        cfg.set(sec, "x", fmt17(s.x));
        cfg.set(sec, "y", fmt17(s.y));
        cfg.set(sec, "heading", fmt17(s.heading));
        cfg.set(sec, "waypoint", std::to_string(s.waypoint));
        cfg.set(sec, "complexity", env::complexity_name(s.complexity));
        if (!s.obstacles.empty()) {
            std::string obs;
            for (std::size_t k = 0; k < s.obstacles.size(); ++k) {
                const auto& o = s.obstacles[k];
                if (k) obs += " ";
                obs += (o.kind == env::ObstacleKind::Cone ? "cone:" : "barrier:");
                obs += fmt17(o.x) + ":" + fmt17(o.y) + ":" + fmt17(o.angle);
            }
            cfg.set(sec, "obstacles", obs);
        }
    }
    cfg.write_file(path);
}

std::vector<env::NavScene> read_nav_scenes(const std::string& path) {
    if (!fs::exists(path)) {
        throw MissingPrerequisite("scene file '" + path +
                                  "' not found; run gen-data --env nav first");
    }
    const io::Config cfg = io::Config::parse_file(path);
    const auto count = static_cast<std::size_t>(cfg.get_int("scenes", "count"));
    std::vector<env::NavScene> scenes;
    scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::string sec = "scene" + std::to_string(i);
        env::NavScene s;
        s.x = cfg.get_real(sec, "x");
        s.y = cfg.get_real(sec, "y");
        s.heading = cfg.get_real(sec, "heading");
        s.waypoint = static_cast<std::size_t>(cfg.get_int(sec, "waypoint"));
        s.complexity = env::parse_complexity(cfg.get(sec, "complexity"));
        const std::string obs = cfg.get_or(sec, "obstacles", "");
        if (!obs.empty()) {
            for (const auto& tok : split(obs, ' ')) {
                const auto parts = split(tok, ':');
                if (parts.size() != 4 || (parts[0] != "cone" && parts[0] != "barrier")) {
                    throw FormatError("scene file '" + path + "': bad obstacle '" + tok + "'");
                }
                env::Obstacle o;
                o.kind = parts[0] == "cone" ? env::ObstacleKind::Cone : env::ObstacleKind::Barrier;
                o.x = parse_real(parts[1], "scene file '" + path + "'");
                o.y = parse_real(parts[2], "scene file '" + path + "'");
                o.angle = parse_real(parts[3], "scene file '" + path + "'");
                s.obstacles.push_back(o);
            }
        }
        scenes.push_back(std::move(s));
    }
    return scenes;
}

void write_diff_pgm(const Tensor<float>& x, const Tensor<float>& x_prime,
                    const std::string& path) {
    if (!ad::same_shape(x.shape(), x_prime.shape())) {
        throw DimensionError("diff images must share a shape, got " + ad::shape_str(x.shape()) +
                             " vs " + ad::shape_str(x_prime.shape()));
    }
    auto diff = Tensor<float>::zeros(x.shape());
    const auto a = x.data();
    const auto b = x_prime.data();
    auto d = diff.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] = std::clamp(0.5f + (b[i] - a[i]) * 0.5f, 0.0f, 1.0f);
    }
    io::write_pgm(path, diff);
}

// --------------------------------------------------------------------------
// entry point
// --------------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"counterfactual explanation pipeline: data generation, model training, "
                 "counterfactual generation, and controller robustness reports"};
    app.require_subcommand(1);

    GenDataArgs gd;
    auto* gen_data = app.add_subcommand("gen-data", "Generate a labeled image dataset");
    gen_data->add_option("--env", gd.env, "environment: shapes, stones, or nav")->required();
    gen_data->add_option("--count", gd.count, "number of samples")->required();
    gen_data->add_option("--seed", gd.seed, "dataset seed");
    auto* complexity_opt = gen_data->add_option("--complexity", gd.complexity,
                                                "nav obstacles: full, cones_only, empty");
    gen_data->add_flag("--augment", gd.augment, "stones: sub-pixel jitter and pixel noise");
    gen_data->add_option("--out", gd.out, "output directory")->required();

    std::string pt_config;
    std::vector<std::string> pt_sets;
    auto* pretrain = app.add_subcommand("pretrain", "Pre-train a generator or classifier");
    pretrain->add_option("config", pt_config, "run configuration file")->required();
    pretrain->add_option("--set", pt_sets, "override section.key=value")->type_size(1);

    std::string tp_config;
    std::vector<std::string> tp_sets;
    auto* train_pred = app.add_subcommand("train-predictor", "Train a controller surrogate");
    train_pred->add_option("config", tp_config, "run configuration file")->required();
    train_pred->add_option("--set", tp_sets, "override section.key=value")->type_size(1);

    std::string tc_config;
    std::vector<std::string> tc_sets;
    auto* train_cgen = app.add_subcommand("train-cgen", "Adversarial counterfactual training");
    train_cgen->add_option("config", tc_config, "run configuration file")->required();
    train_cgen->add_option("--set", tc_sets, "override section.key=value")->type_size(1);

    CounterfactualArgs cf;
    auto* counterfactual =
        app.add_subcommand("counterfactual", "Generate a counterfactual for one image");
    counterfactual->add_option("--model", cf.model, "train-cgen output directory")->required();
    counterfactual->add_option("--input", cf.input, "input PGM image")->required();
    counterfactual
        ->add_option("--goal", cf.goal, "'class', 'angle:<deg>', or a comma-separated vector")
        ->required();
    counterfactual->add_option("--out", cf.out, "output directory")->required();
    counterfactual->add_flag("--latent", cf.latent, "optimize the latent code instead of a "
                                                    "single generator pass");
    counterfactual->add_option("--steps", cf.steps, "latent search step budget");
    counterfactual->add_option("--lr", cf.lr, "latent search learning rate");

    RobustnessArgs rb;
    auto* robustness =
        app.add_subcommand("robustness", "Counterfactual robustness comparison of controllers");
    robustness->add_option("--model", rb.model, "regression train-cgen output directory")
        ->required();
    robustness->add_option("--controllers", rb.controllers, "predictor checkpoints to compare")
        ->required();
    robustness->add_option("--scenarios", rb.scenarios, "nav dataset directory (scenes.txt)")
        ->required();
    robustness->add_option("--goals", rb.goals, "comma-separated goal angles in degrees");
    robustness->add_option("--out", rb.out, "output directory")->required();
    robustness->add_option("--trials", rb.trials, "noise probe trials per scenario");
    robustness->add_option("--epsilon", rb.epsilon, "noise probe squared-shift threshold");
    robustness->add_option("--eta-step", rb.eta_step, "noise gain schedule step");
    robustness->add_option("--eta-max", rb.eta_max, "noise gain schedule limit");
    robustness->add_option("--steps", rb.steps, "latent search step budget per cell");
    robustness->add_option("--lr", rb.lr, "latent search learning rate");
    robustness->add_option("--min-barriers", rb.min_barriers, "barrier scenes wanted in the set");
    robustness->add_option("--seed", rb.seed, "probe seed");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("cgen");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        gd.complexity_given = complexity_opt->count() > 0;
        if (gen_data->parsed()) {
            cmd_gen_data(gd);
        } else if (pretrain->parsed()) {
            cmd_pretrain(load_run_config(pt_config, pt_sets), err);
        } else if (train_pred->parsed()) {
            cmd_train_predictor(load_run_config(tp_config, tp_sets), err);
        } else if (train_cgen->parsed()) {
            cmd_train_cgen(load_run_config(tc_config, tc_sets), err);
        } else if (counterfactual->parsed()) {
            cmd_counterfactual(cf);
        } else if (robustness->parsed()) {
            cmd_robustness(rb, out, err);
        }
        return 0;
    } catch (const MissingPrerequisite& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const VersionError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace cgen::cli
