#include "cgen/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cgen/pgm.hpp"

namespace cgen {

using ad::Shape;
using ad::Tensor;

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// max_digits10 formatting so emitted CSVs reparse to the exact double
std::string fmt17(double v) {
    std::ostringstream o;
    o << std::setprecision(17) << v;
    return o.str();
}

bool has_barrier(const env::NavScene& scene) {
    for (const auto& o : scene.obstacles) {
        if (o.kind == env::ObstacleKind::Barrier) return true;
    }
    return false;
}

}  // namespace

void validate_probe_config(const NoiseProbeConfig& cfg) {
    if (cfg.epsilon <= 0.0) throw ConfigError("probe epsilon must be positive");
    if (cfg.eta_step <= 0.0 || cfg.eta_max < cfg.eta_step) {
        throw ConfigError("probe gain schedule must be strictly increasing up to eta_max");
    }
    if (cfg.trials == 0) throw ConfigError("probe needs at least one trial");
}

template <typename T>
Tensor<T> probe_noise(const Shape& shape, std::uint64_t seed, std::size_t trial) {
    Rng rng(derive_seed(seed, "noise", trial));
    auto t = Tensor<T>::zeros(shape);
    for (auto& v : t.data()) v = static_cast<T>(rng.normal());
    return t;
}

template <typename T>
ProbeResult noise_probe_fn(const std::function<Tensor<T>(const Tensor<T>&)>& predict,
                           const Tensor<T>& x, const NoiseProbeConfig& cfg,
                           const std::vector<Tensor<T>>* noise) {
    validate_probe_config(cfg);
    if (noise != nullptr) {
        if (noise->empty()) throw ValidationError("the noise override is empty");
        for (const auto& mu : *noise) {
            if (!ad::same_shape(mu.shape(), x.shape())) {
                throw DimensionError("noise field " + ad::shape_str(mu.shape()) +
                                     " does not match the input " + ad::shape_str(x.shape()));
            }
        }
    }
    const auto n_steps =
        static_cast<std::size_t>(std::llround(cfg.eta_max / cfg.eta_step));

    Shape bshape{1};
    bshape.insert(bshape.end(), x.shape().begin(), x.shape().end());
    auto xb = Tensor<T>::zeros(bshape);
    std::copy_n(x.data().begin(), x.numel(), xb.data().begin());
    const auto p0t = predict(xb);
    if (p0t.rank() != 2 || p0t.dim(0) != 1) {
        throw DimensionError("probe predictions must be [B, m], got " +
                             ad::shape_str(p0t.shape()));
    }
    const std::vector<double> p0(p0t.data().begin(), p0t.data().end());
    const std::size_t m = p0.size();
    const std::size_t px = x.numel();

    ProbeResult out;
    constexpr std::size_t kChunk = 32;
    for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
        const auto mu = noise != nullptr ? (*noise)[trial % noise->size()]
                                         : probe_noise<T>(x.shape(), cfg.seed, trial);
        double found = cfg.eta_max;
        bool hit = false;

        for (std::size_t start = 0; start < n_steps && !hit; start += kChunk) {
            const std::size_t b = std::min(kChunk, n_steps - start);
            Shape cshape{b};
            cshape.insert(cshape.end(), x.shape().begin(), x.shape().end());
            auto batch = Tensor<T>::zeros(cshape);
            for (std::size_t r = 0; r < b; ++r) {
                const double eta = static_cast<double>(start + r + 1) * cfg.eta_step;
                for (std::size_t i = 0; i < px; ++i) {
                    double v = static_cast<double>(x.data()[i]) +
                               eta * static_cast<double>(mu.data()[i]);
                    v = std::clamp(v, 0.0, 1.0);
                    batch.data()[r * px + i] = static_cast<T>(v);
                }
            }
            const auto pb = predict(batch);
            if (pb.rank() != 2 || pb.dim(0) != b || pb.dim(1) != m) {
                throw DimensionError("probe predictions must be [B, m], got " +
                                     ad::shape_str(pb.shape()));
            }
            for (std::size_t r = 0; r < b && !hit; ++r) {
                double diff = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    const double d = static_cast<double>(pb.data()[r * m + j]) - p0[j];
                    diff += d * d;
                }
                if (diff >= cfg.epsilon) {
                    found = static_cast<double>(start + r + 1) * cfg.eta_step;
                    hit = true;
                }
            }
        }
        out.per_trial.push_back(found);
    }
    out.eta_star = median_of(out.per_trial);
    return out;
}

template <typename T>
ProbeResult noise_probe(const nn::Predictor<T>& predictor, const Tensor<T>& x,
                        const NoiseProbeConfig& cfg) {
    const std::function<Tensor<T>(const Tensor<T>&)> predict =
        [&](const Tensor<T>& batch) { return predictor.predict(batch); };
    return noise_probe_fn<T>(predict, x, cfg, nullptr);
}

ControllerFamilyResult train_controller_family(const ControllerFamilyConfig& cfg) {
    if (cfg.scenes == 0 || cfg.val_scenes == 0 || cfg.epochs == 0 || cfg.batch_size == 0 ||
        cfg.lr <= 0.0 || cfg.base_width == 0) {
        throw ConfigError(
            "controller family needs positive scene counts, epochs, batch size, width, and "
            "learning rate");
    }
    const Shape img = {1, env::kNavSize, env::kNavSize};

    const auto full =
        env::gen_nav_dataset(env::Complexity::Full, cfg.scenes, derive_seed(cfg.data_seed, "family", 0));
    const auto cones = env::gen_nav_dataset(env::Complexity::ConesOnly, cfg.scenes,
                                            derive_seed(cfg.data_seed, "family", 1));
    const auto empty = env::gen_nav_dataset(env::Complexity::Empty, cfg.scenes,
                                            derive_seed(cfg.data_seed, "family", 2));

    ControllerFamilyResult res;
    res.a = nn::Predictor<float>(img, 10, cfg.model_seed, cfg.base_width);
    res.b = nn::Predictor<float>(img, 10, cfg.model_seed, cfg.base_width);
    res.c = nn::Predictor<float>(img, 10, cfg.model_seed, cfg.base_width);

    SupervisedConfig scfg;
    scfg.epochs = cfg.epochs;
    scfg.batch_size = cfg.batch_size;
    scfg.lr = cfg.lr;
    scfg.seed = cfg.model_seed;
    res.log_a = train_predictor(res.a, full.images, full.labels, scfg);
    res.log_b = train_predictor(res.b, cones.images, cones.labels, scfg);
    res.log_c = train_predictor(res.c, empty.images, empty.labels, scfg);

    const auto val = env::gen_nav_dataset(env::Complexity::Empty, cfg.val_scenes,
                                          derive_seed(cfg.data_seed, "family-val"));
    res.val_mse_c =
        static_cast<double>(ad::mse(res.c.predict(val.images), val.labels).item());
    if (res.val_mse_c > cfg.val_threshold) {
        res.warnings.push_back("controller c validation mse " + fmt17(res.val_mse_c) +
                               " misses the target " + fmt17(cfg.val_threshold));
    }
    if (res.a.hash() == res.b.hash() || res.a.hash() == res.c.hash() ||
        res.b.hash() == res.c.hash()) {
        res.warnings.push_back(
            "controller weight hashes collide; the training sets failed to differentiate them");
    }
    return res;
}

RobustnessReport robustness_compare(const nn::Generator<float>& g, const nn::Classifier<float>& c,
                                    const std::vector<NamedController>& controllers,
                                    const CompareConfig& cfg,
                                    const std::vector<env::NavScene>* scenes) {
    if (controllers.empty()) throw ConfigError("robustness comparison needs controllers");
    for (const auto& nc : controllers) {
        if (nc.predictor == nullptr || nc.name.empty()) {
            throw ConfigError("every controller needs a name and a predictor");
        }
        if (!nc.predictor->frozen()) {
            throw StateError("controller " + nc.name + " must be frozen for the comparison");
        }
    }
    for (std::size_t i = 0; i < controllers.size(); ++i) {
        for (std::size_t j = i + 1; j < controllers.size(); ++j) {
            if (controllers[i].name == controllers[j].name) {
                throw ConfigError("controller names must be unique: " + controllers[i].name);
            }
        }
    }
    const std::size_t scenario_count = scenes != nullptr ? scenes->size() : cfg.scenarios;
    if (scenario_count == 0 || cfg.goals_deg.empty()) {
        throw ConfigError("the comparison grid needs scenarios and goals");
    }
    if (cfg.search.weights.mode != CGenMode::Regression) {
        throw ConfigError("the comparison needs regression-mode search weights");
    }
    if (!g.variational()) {
        throw UnsupportedError("the comparison needs a variational generator");
    }
    validate_probe_config(cfg.probe);

    RobustnessReport report;
    report.goals_deg = cfg.goals_deg;

    if (scenes != nullptr) {
        // caller-supplied scenes are used verbatim; a missed barrier quota is
        // their call, so it only warns
        report.scenarios = *scenes;
        std::size_t barriers = 0;
        for (const auto& s : report.scenarios) barriers += has_barrier(s) ? 1 : 0;
        if (barriers < std::min(cfg.min_barrier_scenes, scenario_count)) {
            report.warnings.push_back("supplied scene set has only " + std::to_string(barriers) +
                                      " barrier scenes (wanted " +
                                      std::to_string(cfg.min_barrier_scenes) + ")");
        }
    } else {
        // scenario set: full complexity, topped up from the same stream until
        // the barrier quota is met so the barrier claim has data to stand on
        std::size_t draw = 0;
        const auto next_scene = [&]() {
            Rng rng(derive_seed(cfg.scene_seed, "scenario", draw++));
            return env::sample_nav_scene(rng, env::Complexity::Full);
        };
        while (report.scenarios.size() < scenario_count) report.scenarios.push_back(next_scene());
        const std::size_t quota = std::min(cfg.min_barrier_scenes, scenario_count);
        std::size_t barriers = 0;
        for (const auto& s : report.scenarios) barriers += has_barrier(s) ? 1 : 0;
        std::size_t attempts = 0;
        while (barriers < quota && attempts < 200) {
            const auto s = next_scene();
            ++attempts;
            if (!has_barrier(s)) continue;
            for (std::size_t i = report.scenarios.size(); i-- > 0;) {
                if (!has_barrier(report.scenarios[i])) {
                    report.scenarios[i] = s;
                    ++barriers;
                    break;
                }
            }
        }
        if (barriers < quota) {
            report.warnings.push_back("barrier quota unmet after 200 extra scene draws");
        }
    }
    for (const auto& s : report.scenarios) report.scenario_has_barrier.push_back(has_barrier(s));

    std::vector<Tensor<float>> images;
    images.reserve(report.scenarios.size());
    for (const auto& s : report.scenarios) images.push_back(env::render_nav(s));

    std::vector<std::uint64_t> hashes_before;
    for (const auto& nc : controllers) hashes_before.push_back(nc.predictor->hash());

    // grid: per controller, per scenario (probe + per-goal searches)
    for (const auto& nc : controllers) {
        ControllerSummary sum;
        sum.name = nc.name;
        double tg = 0, tc = 0, tp = 0, tt = 0;
        std::size_t ok_cells = 0;

        for (std::size_t s = 0; s < report.scenarios.size(); ++s) {
            NoiseProbeConfig probe_cfg = cfg.probe;
            probe_cfg.seed = derive_seed(cfg.probe.seed, "probe", s);
            const auto probe = noise_probe(*nc.predictor, images[s], probe_cfg);
            sum.eta_per_scenario.push_back(probe.eta_star);

            for (const double goal : cfg.goals_deg) {
                RobustnessCell cell;
                cell.controller = nc.name;
                cell.scenario_id = s;
                cell.goal_deg = goal;
                cell.eta_star = probe.eta_star;
                try {
                    const auto target = env::goal_from_angle(goal);
                    std::vector<float> tvals(target.begin(), target.end());
                    const auto t_r = Tensor<float>::from({1, 10}, std::move(tvals));
                    const auto res =
                        latent_counterfactual_search(g, c, *nc.predictor, images[s], t_r,
                                                     cfg.search);
                    cell.l_g = res.l_g;
                    cell.l_c = res.l_c;
                    cell.l_p = res.l_p;
                    cell.l_total = res.l_total;
                    tg += res.l_g;
                    tc += res.l_c;
                    tp += res.l_p;
                    tt += res.l_total;
                    ++ok_cells;
                } catch (const Error& e) {
                    cell.failed = true;
                    cell.fail_reason = e.what();
                    ++sum.failed_cells;
                }
                report.cells.push_back(std::move(cell));
            }
        }
        if (ok_cells > 0) {
            sum.mean_l_g = tg / static_cast<double>(ok_cells);
            sum.mean_l_c = tc / static_cast<double>(ok_cells);
            sum.mean_l_p = tp / static_cast<double>(ok_cells);
            sum.mean_l_total = tt / static_cast<double>(ok_cells);
        } else {
            report.warnings.push_back("controller " + nc.name + " has no successful cells");
        }
        sum.median_eta = median_of(sum.eta_per_scenario);
        report.summaries.push_back(std::move(sum));
    }

    for (std::size_t i = 0; i < controllers.size(); ++i) {
        if (controllers[i].predictor->hash() != hashes_before[i]) {
            throw StateError("controller " + controllers[i].name +
                             " was mutated by the comparison");
        }
    }

    // verdicts
    report.ordering_ok = true;
    for (std::size_t i = 0; i + 1 < report.summaries.size(); ++i) {
        if (report.summaries[i].failed_cells == report.goals_deg.size() * report.scenarios.size() ||
            report.summaries[i].mean_l_total > report.summaries[i + 1].mean_l_total) {
            report.ordering_ok = false;
        }
    }
    if (report.summaries.size() < 2) report.ordering_ok = false;

    std::size_t barrier_scenes = 0;
    for (const bool b : report.scenario_has_barrier) barrier_scenes += b ? 1 : 0;
    if (report.summaries.size() >= 2 && barrier_scenes > 0) {
        // barrier-scene means of the first two controllers (a vs b)
        double mean_a = 0, mean_b = 0;
        std::size_t na = 0, nb = 0;
        for (const auto& cell : report.cells) {
            if (cell.failed || !report.scenario_has_barrier[cell.scenario_id]) continue;
            if (cell.controller == report.summaries[0].name) {
                mean_a += cell.l_total;
                ++na;
            } else if (cell.controller == report.summaries[1].name) {
                mean_b += cell.l_total;
                ++nb;
            }
        }
        report.barrier_ok = na > 0 && nb > 0 && (mean_b / static_cast<double>(nb)) >
                                                    (mean_a / static_cast<double>(na));
    }

    double eta_lo = 0, eta_hi = 0;
    for (std::size_t i = 0; i < report.summaries.size(); ++i) {
        const double e = report.summaries[i].median_eta;
        if (i == 0 || e < eta_lo) eta_lo = e;
        if (i == 0 || e > eta_hi) eta_hi = e;
    }
    report.noise_similar = !report.summaries.empty() && eta_lo > 0.0 && eta_hi <= 2.0 * eta_lo;

    return report;
}

void write_robustness_csv(const std::string& path, const RobustnessReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "controller,scenario_id,goal_deg,l_g,l_c,l_p,l_total,eta_star\n";
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& cell : report.cells) {
        const double lg = cell.failed ? nan : cell.l_g;
        const double lc = cell.failed ? nan : cell.l_c;
        const double lp = cell.failed ? nan : cell.l_p;
        const double lt = cell.failed ? nan : cell.l_total;
        out << cell.controller << ',' << cell.scenario_id << ',' << fmt17(cell.goal_deg) << ','
            << fmt17(lg) << ',' << fmt17(lc) << ',' << fmt17(lp) << ',' << fmt17(lt) << ','
            << fmt17(cell.eta_star) << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed while writing " + path);
}

std::vector<HeatmapInfo> emit_heatmaps(const RobustnessReport& report,
                                       const std::string& prefix) {
    constexpr std::size_t kCell = 8;  // heat pixels per grid cell
    const std::size_t S = report.scenarios.size();
    const std::size_t G = report.goals_deg.size();
    if (S == 0 || G == 0) throw ValidationError("the report grid is empty");

    std::vector<HeatmapInfo> infos;
    for (const auto& sum : report.summaries) {
        // matrix of l_total per (scenario, goal); nan marks a failed cell
        std::vector<double> matrix(S * G, std::numeric_limits<double>::quiet_NaN());
        for (const auto& cell : report.cells) {
            if (cell.controller != sum.name || cell.failed) continue;
            for (std::size_t gi = 0; gi < G; ++gi) {
                if (cell.goal_deg == report.goals_deg[gi]) {
                    matrix[cell.scenario_id * G + gi] = cell.l_total;
                    break;
                }
            }
        }

        HeatmapInfo info;
        info.controller = sum.name;
        bool any = false;
        for (std::size_t i = 0; i < matrix.size(); ++i) {
            if (std::isnan(matrix[i])) {
                info.gaps = true;
                continue;
            }
            if (!any || matrix[i] < info.min_l) info.min_l = matrix[i];
            if (!any || matrix[i] > info.max_l) info.max_l = matrix[i];
            any = true;
        }
        const double denom = info.max_l - info.min_l;

        auto img = Tensor<float>::zeros({1, S * kCell, G * kCell});
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t gi = 0; gi < G; ++gi) {
                const double v = matrix[s * G + gi];
                // failed cells render as zero-intensity gap markers
                double norm = 0.0;
                if (!std::isnan(v)) norm = denom > 0.0 ? (v - info.min_l) / denom : 0.5;
                for (std::size_t r = 0; r < kCell; ++r) {
                    for (std::size_t q = 0; q < kCell; ++q) {
                        img.data()[(s * kCell + r) * G * kCell + gi * kCell + q] =
                            static_cast<float>(norm);
                    }
                }
            }
        }
        info.pgm_path = prefix + "_" + sum.name + ".pgm";
        io::write_pgm(info.pgm_path, img);

        info.matrix_path = prefix + "_" + sum.name + "_matrix.csv";
        std::ofstream mat(info.matrix_path, std::ios::trunc);
        if (!mat) throw IoError("cannot open " + info.matrix_path + " for writing");
        mat << "scenario_id";
        for (const double goal : report.goals_deg) mat << ",goal_" << fmt17(goal);
        mat << '\n';
        for (std::size_t s = 0; s < S; ++s) {
            mat << s;
            for (std::size_t gi = 0; gi < G; ++gi) mat << ',' << fmt17(matrix[s * G + gi]);
            mat << '\n';
        }
        mat.flush();
        if (!mat) throw IoError("failed while writing " + info.matrix_path);

        infos.push_back(std::move(info));
    }
    return infos;
}

void write_robustness_summary(const std::string& path, const RobustnessReport& report,
                              const std::vector<HeatmapInfo>& heatmaps) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");

    std::size_t barrier_scenes = 0;
    for (const bool b : report.scenario_has_barrier) barrier_scenes += b ? 1 : 0;

    out << "robustness comparison summary\n";
    out << "=============================\n";
    out << "scenarios: " << report.scenarios.size() << " (with barriers: " << barrier_scenes
        << ")\n";
    out << "goals_deg:";
    for (const double g : report.goals_deg) out << ' ' << fmt17(g);
    out << "\n\n";

    out << "per-controller means over successful cells\n";
    for (const auto& s : report.summaries) {
        out << "controller " << s.name << ": l_total=" << fmt17(s.mean_l_total)
            << " l_g=" << fmt17(s.mean_l_g) << " l_c=" << fmt17(s.mean_l_c)
            << " l_p=" << fmt17(s.mean_l_p) << " eta_median=" << fmt17(s.median_eta)
            << " failed_cells=" << s.failed_cells << '\n';
    }
    out << '\n';

    out << "verdicts\n";
    out << "ordering (mean l_total non-decreasing): " << (report.ordering_ok ? "PASS" : "FAIL")
        << '\n';
    out << "barrier scenes (second controller loses to first): "
        << (report.barrier_ok ? "PASS" : "FAIL") << '\n';
    out << "noise medians within factor 2: " << (report.noise_similar ? "PASS" : "FAIL")
        << '\n';

    if (!heatmaps.empty()) {
        out << "\nheatmap normalization\n";
        for (const auto& h : heatmaps) {
            out << "controller " << h.controller << ": min=" << fmt17(h.min_l)
                << " max=" << fmt17(h.max_l) << " image=" << h.pgm_path
                << (h.gaps ? " (grid has gaps)" : "") << '\n';
        }
    }
    if (!report.warnings.empty()) {
        out << "\nwarnings\n";
        for (const auto& w : report.warnings) out << "- " << w << '\n';
    }
    out.flush();
    if (!out) throw IoError("failed while writing " + path);
}

template Tensor<float> probe_noise<float>(const Shape&, std::uint64_t, std::size_t);
template Tensor<double> probe_noise<double>(const Shape&, std::uint64_t, std::size_t);
template ProbeResult noise_probe_fn<float>(
    const std::function<Tensor<float>(const Tensor<float>&)>&, const Tensor<float>&,
    const NoiseProbeConfig&, const std::vector<Tensor<float>>*);
template ProbeResult noise_probe_fn<double>(
    const std::function<Tensor<double>(const Tensor<double>&)>&, const Tensor<double>&,
    const NoiseProbeConfig&, const std::vector<Tensor<double>>*);
template ProbeResult noise_probe<float>(const nn::Predictor<float>&, const Tensor<float>&,
                                        const NoiseProbeConfig&);
template ProbeResult noise_probe<double>(const nn::Predictor<double>&, const Tensor<double>&,
                                         const NoiseProbeConfig&);

}  // namespace cgen
