// smlelm: command-line front end for training, evaluating and tuning the
// sparse multinomial-logistic ELM classifiers on hyperspectral cubes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <smlelm/smlelm.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using namespace smlelm;

namespace {

struct RunConfig {
    fs::path cube;
    fs::path labels;
    fs::path out;
    std::string variant = "asml_belm";
    DatasetProfile profile = DatasetProfile::indian_pines;
    SplitSpec split = SplitSpec::by_fraction(0.1);
    std::uint64_t seed = 0;

    std::optional<double> a;
    std::optional<long long> hidden;
    std::optional<double> c;
    std::optional<double> sigma_w;
    std::optional<double> sigma_s;
    std::optional<long long> window;
    std::optional<double> mu;
    std::optional<double> z;
    std::optional<CombineRule> rule;
    std::optional<SolverMode> solver;
    std::optional<long long> max_iters;
    std::optional<double> tol_beta;
    std::optional<double> tol_grad;

    std::vector<int> cv_c_exponents;
    std::vector<int> cv_sigma_exponents;
    int cv_folds = 3;

    std::string sweep_axis;
    std::vector<double> sweep_values;

    RunConfig()
    {
        for (int p = 1; p <= 15; ++p)
            cv_c_exponents.push_back(p);
        for (int q = -6; q <= 1; ++q)
            cv_sigma_exponents.push_back(q);
    }
};

[[noreturn]] void config_error(const std::string& msg) { throw ContractError("config: " + msg); }

double number(const json& v, const std::string& key)
{
    if (!v.is_number())
        config_error("'" + key + "' must be a number");
    return v.get<double>();
}

long long integer(const json& v, const std::string& key)
{
    if (!v.is_number_integer())
        config_error("'" + key + "' must be an integer");
    return v.get<long long>();
}

std::string text(const json& v, const std::string& key)
{
    if (!v.is_string())
        config_error("'" + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<int> int_list(const json& v, const std::string& key)
{
    if (!v.is_array() || v.empty())
        config_error("'" + key + "' must be a non-empty array of integers");
    std::vector<int> out;
    for (const auto& e : v)
        out.push_back(static_cast<int>(integer(e, key)));
    return out;
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

void parse_split(const json& v, RunConfig& cfg)
{
    if (!v.is_object() || v.size() != 1)
        config_error("'split' must be an object with exactly one of 'fraction' or 'count'");
    if (v.contains("fraction"))
        cfg.split = SplitSpec::by_fraction(number(v["fraction"], "split.fraction"));
    else if (v.contains("count"))
        cfg.split = SplitSpec::by_count(integer(v["count"], "split.count"));
    else
        config_error("unknown key 'split." + v.begin().key() + "'");
    cfg.split.validate();
}

void parse_cv(const json& v, RunConfig& cfg)
{
    if (!v.is_object())
        config_error("'cv' must be an object");
    for (const auto& [key, val] : v.items()) {
        if (key == "c_exponents")
            cfg.cv_c_exponents = int_list(val, "cv.c_exponents");
        else if (key == "sigma_exponents")
            cfg.cv_sigma_exponents = int_list(val, "cv.sigma_exponents");
        else if (key == "folds")
            cfg.cv_folds = static_cast<int>(integer(val, "cv.folds"));
        else
            config_error("unknown key 'cv." + key + "'");
    }
}

void parse_sweep(const json& v, RunConfig& cfg)
{
    if (!v.is_object())
        config_error("'sweep' must be an object");
    for (const auto& [key, val] : v.items()) {
        if (key == "axis") {
            cfg.sweep_axis = text(val, "sweep.axis");
        } else if (key == "values") {
            if (!val.is_array())
                config_error("'sweep.values' must be an array of numbers");
            cfg.sweep_values.clear();
            for (const auto& e : val)
                cfg.sweep_values.push_back(number(e, "sweep.values"));
        } else {
            config_error("unknown key 'sweep." + key + "'");
        }
    }
}

/// Reads and validates a run configuration. Relative data paths are taken
/// relative to the configuration file.
RunConfig load_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw LoadError("cannot open config '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw LoadError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object())
        config_error("top level must be an object");
    const fs::path base = path.parent_path();
    RunConfig cfg;
    for (const auto& [key, v] : j.items()) {
        if (key == "cube")
            cfg.cube = resolve(base, text(v, key));
        else if (key == "labels")
            cfg.labels = resolve(base, text(v, key));
        else if (key == "out")
            cfg.out = resolve(base, text(v, key));
        else if (key == "variant")
            cfg.variant = text(v, key);
        else if (key == "profile") {
            const auto p = text(v, key);
            if (p == "indian_pines")
                cfg.profile = DatasetProfile::indian_pines;
            else if (p == "pavia")
                cfg.profile = DatasetProfile::pavia;
            else
                config_error("'profile' must be \"indian_pines\" or \"pavia\"");
        } else if (key == "split")
            parse_split(v, cfg);
        else if (key == "seed") {
            if (!v.is_number_unsigned())
                config_error("'seed' must be a non-negative integer");
            cfg.seed = v.get<std::uint64_t>();
        } else if (key == "a")
            cfg.a = number(v, key);
        else if (key == "L")
            cfg.hidden = integer(v, key);
        else if (key == "C")
            cfg.c = number(v, key);
        else if (key == "sigma_w")
            cfg.sigma_w = number(v, key);
        else if (key == "sigma_s")
            cfg.sigma_s = number(v, key);
        else if (key == "window")
            cfg.window = integer(v, key);
        else if (key == "mu")
            cfg.mu = number(v, key);
        else if (key == "z")
            cfg.z = number(v, key);
        else if (key == "rule") {
            const auto r = text(v, key);
            if (r != "linear" && r != "sqrt")
                config_error("'rule' must be \"linear\" or \"sqrt\"");
            cfg.rule = r == "linear" ? CombineRule::linear : CombineRule::sqrt;
        } else if (key == "solver") {
            const auto s = text(v, key);
            if (s != "admm" && s != "mm")
                config_error("'solver' must be \"admm\" or \"mm\"");
            cfg.solver = s == "admm" ? SolverMode::admm : SolverMode::mm;
        } else if (key == "max_iters")
            cfg.max_iters = integer(v, key);
        else if (key == "tol_beta")
            cfg.tol_beta = number(v, key);
        else if (key == "tol_grad")
            cfg.tol_grad = number(v, key);
        else if (key == "cv")
            parse_cv(v, cfg);
        else if (key == "sweep")
            parse_sweep(v, cfg);
        else
            config_error("unknown key '" + key + "'");
    }
    return cfg;
}

ClassifierSpec resolve_spec(const RunConfig& cfg)
{
    const VariantTag tag = parse_variant(cfg.variant);
    ClassifierSpec s = default_spec(tag.variant, tag.wcf, cfg.profile);
    s.seed = cfg.seed;
    if (cfg.a)
        s.solver.lambda = std::exp2(*cfg.a);
    if (cfg.hidden)
        s.hidden = *cfg.hidden;
    if (cfg.c)
        s.c = *cfg.c;
    if (cfg.sigma_w)
        s.sigma_w = *cfg.sigma_w;
    if (cfg.sigma_s)
        s.sigma_s = *cfg.sigma_s;
    if (cfg.window)
        s.wcf_cfg.window = *cfg.window;
    if (cfg.mu)
        s.wcf_cfg.mu = *cfg.mu;
    if (cfg.z)
        s.wcf_cfg.z = *cfg.z;
    if (cfg.rule)
        s.wcf_cfg.rule = *cfg.rule;
    if (cfg.solver)
        s.solver.mode = *cfg.solver;
    if (cfg.max_iters)
        s.solver.max_iters = static_cast<int>(*cfg.max_iters);
    if (cfg.tol_beta)
        s.solver.tol_beta = *cfg.tol_beta;
    if (cfg.tol_grad)
        s.solver.tol_grad = *cfg.tol_grad;
    s.solver.validate();
    s.wcf_cfg.validate();
    if (!(s.c > 0.0) || !(s.sigma_w > 0.0) || !(s.sigma_s > 0.0))
        config_error("C, sigma_w and sigma_s must be positive");
    if (s.hidden < 1)
        config_error("L must be >= 1");
    return s;
}

struct Dataset {
    HsiCube cube; // scaled
    MinMax scaling;
    LabelGrid labels;
    Split split;
};

Dataset load_dataset(const RunConfig& cfg)
{
    if (cfg.cube.empty() || cfg.labels.empty())
        config_error("'cube' and 'labels' paths are required");
    const HsiCube raw = load_cube(cfg.cube);
    Dataset d{HsiCube(), minmax_params(raw), load_labels(cfg.labels), {}};
    d.cube = apply_scaling(raw, d.scaling);
    d.split = split_per_class(d.labels, d.cube, cfg.split, cfg.seed);
    return d;
}

fs::path output_dir(const RunConfig& cfg)
{
    if (cfg.out.empty())
        config_error("an output directory is required (--out or 'out')");
    fs::create_directories(cfg.out);
    return cfg.out;
}

void write_text(const fs::path& p, const std::string& s) { detail::write_file(p, s); }

std::string fmt_double(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

ojson spec_json(const ClassifierSpec& s, const RunConfig& cfg)
{
    ojson j;
    j["variant"] = variant_name(s.variant, s.wcf);
    j["profile"] = cfg.profile == DatasetProfile::pavia ? "pavia" : "indian_pines";
    j["lambda"] = s.solver.lambda;
    j["a"] = std::log2(s.solver.lambda);
    j["gamma"] = s.solver.effective_gamma();
    j["solver"] = s.solver.mode == SolverMode::admm ? "admm" : "mm";
    j["max_iters"] = s.solver.max_iters;
    j["tol_beta"] = s.solver.tol_beta;
    j["tol_grad"] = s.solver.tol_grad;
    j["lambda_floor_eps"] = s.solver.lambda_floor_eps;
    if (s.uses_hidden_layer())
        j["L"] = s.hidden;
    if (s.variant != Variant::belm)
        j["C"] = s.c;
    if (s.variant == Variant::kelm) {
        j["sigma_w"] = s.sigma_w;
        if (s.wcf)
            j["sigma_s"] = s.sigma_s;
    }
    if (s.wcf) {
        j["window"] = s.wcf_cfg.window;
        j["z"] = s.wcf_cfg.z;
        j["mu"] = s.wcf_cfg.mu;
        j["rule"] = s.wcf_cfg.rule == CombineRule::linear ? "linear" : "sqrt";
    }
    return j;
}

double evaluate_oa(const TrainedModel& m, const Dataset& d)
{
    const auto pred = predict(m, d.split.test, &d.cube);
    return oa(confusion(d.split.test.labels, pred.labels, m.classes));
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SynthOptions {
    fs::path out;
    SynthConfig cfg;
    std::string name = "scene";
};

int cmd_synth(const SynthOptions& o)
{
    if (o.out.empty())
        config_error("synth needs --out");
    const SynthScene s = make_synthetic_scene(o.cfg);
    fs::create_directories(o.out);
    write_cube(o.out / (o.name + ".raw"), s.cube);
    write_labels(o.out / (o.name + "_gt.raw"), s.labels);
    std::cout << "wrote " << (o.out / (o.name + ".raw")).string() << " and "
              << (o.out / (o.name + "_gt.raw")).string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg)
{
    const auto t0 = std::chrono::steady_clock::now();
    const ClassifierSpec spec = resolve_spec(cfg);
    const Dataset d = load_dataset(cfg);
    const TrainResult r = train(spec, d.split.train, &d.cube, d.scaling);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path out = output_dir(cfg);
    write_text(out / "trace.csv", trace_csv(r.fit.trace));
    ojson m;
    m["command"] = "train";
    m["seed"] = cfg.seed;
    m["cube"] = cfg.cube.string();
    m["labels"] = cfg.labels.string();
    m["split"] = cfg.split.mode == SplitSpec::Mode::fraction ? ojson{{"fraction", cfg.split.fraction}}
                                                             : ojson{{"count", cfg.split.count}};
    m["classifier"] = spec_json(spec, cfg);
    m["classes"] = r.model.classes;
    m["bands"] = r.model.bands;
    m["train_samples"] = d.split.train.size();
    m["test_samples"] = d.split.test.size();
    m["iterations"] = r.fit.trace.iterations.size();
    m["converged"] = r.fit.converged;
    m["scaling"] = {{"min", d.scaling.lo}, {"max", d.scaling.hi}};
    m["wall_time_s"] = wall;
    write_text(out / "manifest.json", m.dump(2) + "\n");
    save_model(out / "model.bin", r.model);
    std::cout << "trained " << variant_name(spec.variant, spec.wcf) << " on " << d.split.train.size()
              << " samples, " << r.fit.trace.iterations.size() << " solver iterations; model in "
              << (out / "model.bin").string() << "\n";
    return 0;
}

fs::path model_path(const RunConfig& cfg, const std::string& flag)
{
    if (!flag.empty())
        return flag;
    if (cfg.out.empty())
        config_error("need --model or an output directory holding model.bin");
    return cfg.out / "model.bin";
}

int cmd_evaluate(const RunConfig& cfg, const std::string& model_flag)
{
    const TrainedModel model = load_model(model_path(cfg, model_flag));
    const Dataset d = load_dataset(cfg);
    if (model.bands != d.cube.bands())
        throw ContractError("model expects " + std::to_string(model.bands) + " bands, cube has "
                            + std::to_string(d.cube.bands()));
    if (model.classes != d.labels.class_count())
        throw ContractError("model has " + std::to_string(model.classes) + " classes, labels have "
                            + std::to_string(d.labels.class_count()));
    const auto pred = predict(model, d.split.test, &d.cube);
    const auto cm = confusion(d.split.test.labels, pred.labels, model.classes);
    const fs::path out = output_dir(cfg);
    write_text(out / "metrics.csv", metrics_csv(cm));
    write_text(out / "confusion.csv", confusion_csv(cm));
    write_class_map(out / "classmap.ppm", predict_scene(model, d.cube), d.cube.rows(), d.cube.cols());
    write_class_map(out / "groundtruth.ppm", d.labels.labels(), d.labels.rows(), d.labels.cols());
    char buf[128];
    std::snprintf(buf, sizeof buf, "OA %.2f  AA %.2f  k %.2f\n", 100 * oa(cm), 100 * aa(cm), 100 * kappa(cm));
    std::cout << buf;
    return 0;
}

int cmd_predict(const std::string& model_flag, const fs::path& cube_path, const fs::path& out_dir)
{
    if (model_flag.empty() || cube_path.empty() || out_dir.empty())
        config_error("predict needs --model, --cube and --out");
    const TrainedModel model = load_model(model_flag);
    const HsiCube cube = apply_scaling(load_cube(cube_path), model.scaling);
    const auto labels = predict_scene(model, cube);
    fs::create_directories(out_dir);
    write_labels(out_dir / "predicted.raw", LabelGrid(cube.rows(), cube.cols(), labels));
    write_class_map(out_dir / "classmap.ppm", labels, cube.rows(), cube.cols());
    std::cout << "labelled " << labels.size() << " pixels\n";
    return 0;
}

int cmd_sweep(RunConfig cfg)
{
    if (cfg.sweep_axis != "a" && cfg.sweep_axis != "L" && cfg.sweep_axis != "window")
        config_error("sweep axis must be one of a, L, window");
    if (cfg.sweep_values.empty())
        config_error("sweep needs at least one value");
    std::vector<double> values = cfg.sweep_values;
    std::sort(values.begin(), values.end());
    const Dataset d = load_dataset(cfg);
    std::string csv = "value,OA\n";
    for (double v : values) {
        RunConfig point = cfg;
        if (cfg.sweep_axis == "a") {
            point.a = v;
        } else {
            if (v != std::floor(v))
                config_error("sweep values for " + cfg.sweep_axis + " must be integers");
            (cfg.sweep_axis == "L" ? point.hidden : point.window) = static_cast<long long>(v);
        }
        const auto model = train(resolve_spec(point), d.split.train, &d.cube, d.scaling).model;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s,%.4f\n", fmt_double(v).c_str(), 100.0 * evaluate_oa(model, d));
        csv += buf;
        std::cout << buf << std::flush;
    }
    write_text(output_dir(cfg) / ("sweep_" + cfg.sweep_axis + ".csv"), csv);
    return 0;
}

int cmd_crossval(const RunConfig& cfg)
{
    const ClassifierSpec spec = resolve_spec(cfg);
    const Dataset d = load_dataset(cfg);
    CvGrid grid;
    for (int p : cfg.cv_c_exponents)
        grid.c.push_back(std::ldexp(1.0, p));
    // sigma only enters the kernel variants; the others get a single column
    if (spec.variant == Variant::kelm)
        for (int q : cfg.cv_sigma_exponents)
            grid.sigma.push_back(std::ldexp(1.0, q));
    else
        grid.sigma.push_back(spec.sigma_w);
    const CvResult r = cross_validate(spec, grid, d.split.train, &d.cube, cfg.cv_folds);
    std::string csv = "C,sigma";
    for (int f = 1; f <= cfg.cv_folds; ++f)
        csv += ",fold" + std::to_string(f);
    csv += ",mean\n";
    for (const auto& pt : r.surface) {
        csv += fmt_double(pt.c) + "," + fmt_double(pt.sigma);
        for (double s : pt.fold_scores)
            csv += "," + fmt_double(s);
        csv += "," + fmt_double(pt.mean) + "\n";
    }
    write_text(output_dir(cfg) / "cv.csv", csv);
    std::cout << "best C " << fmt_double(r.best_c) << "  sigma " << fmt_double(r.best_sigma) << "\n";
    return 0;
}

std::vector<double> parse_values(const std::string& s)
{
    std::vector<double> out;
    if (s.empty())
        return out;
    // lo:hi[:step] or a comma list
    if (s.find(':') != std::string::npos) {
        std::vector<double> parts;
        std::stringstream ss(s);
        for (std::string tok; std::getline(ss, tok, ':');)
            parts.push_back(std::stod(tok));
        const double step = parts.size() == 3 ? parts[2] : 1.0;
        if (parts.size() < 2 || parts.size() > 3 || !(step > 0.0))
            config_error("value range must be lo:hi[:step] with step > 0");
        for (double v = parts[0]; v <= parts[1] + 1e-9 * step; v += step)
            out.push_back(v);
        return out;
    }
    std::stringstream ss(s);
    for (std::string tok; std::getline(ss, tok, ',');)
        out.push_back(std::stod(tok));
    return out;
}

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string variant;
    std::optional<double> a;
    std::optional<long long> hidden;
    std::optional<long long> window;
    std::optional<double> mu;
};

void add_run_options(CLI::App* app, std::string& config, Overrides& o)
{
    app->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", o.seed, "root seed");
    app->add_option("--out", o.out, "output directory");
    app->add_option("--variant", o.variant, "asml_belm | asml_nlelm | asml_kelm, optional _wcf suffix");
    app->add_option("--a", o.a, "lambda = 2^a");
    app->add_option("--L", o.hidden, "hidden neurons");
    app->add_option("--window", o.window, "odd WCF window width");
    app->add_option("--mu", o.mu, "spectral share of the composite features");
}

RunConfig configured(const std::string& path, const Overrides& o)
{
    RunConfig cfg = load_config(path);
    if (o.seed)
        cfg.seed = *o.seed;
    if (!o.out.empty())
        cfg.out = o.out;
    if (!o.variant.empty())
        cfg.variant = o.variant;
    if (o.a)
        cfg.a = o.a;
    if (o.hidden)
        cfg.hidden = o.hidden;
    if (o.window)
        cfg.window = o.window;
    if (o.mu)
        cfg.mu = o.mu;
    return cfg;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse multinomial-logistic ELM classifiers for hyperspectral images"};
    app.require_subcommand(1);

    SynthOptions synth;
    auto* s = app.add_subcommand("synth", "write a synthetic scene (cube + labels)");
    s->add_option("--out", synth.out, "output directory")->required();
    s->add_option("--name", synth.name, "file stem");
    s->add_option("--seed", synth.cfg.seed);
    s->add_option("--rows", synth.cfg.rows);
    s->add_option("--cols", synth.cfg.cols);
    s->add_option("--bands", synth.cfg.bands);
    s->add_option("--classes", synth.cfg.classes);
    s->add_option("--separation", synth.cfg.separation);
    s->add_option("--noise", synth.cfg.noise);
    s->add_option("--min-patch", synth.cfg.min_patch);
    s->add_option("--max-patch", synth.cfg.max_patch);

    std::string config;
    Overrides over;
    std::string model_flag;
    auto* tr = app.add_subcommand("train", "train a classifier; writes model.bin, trace.csv, manifest.json");
    add_run_options(tr, config, over);

    auto* ev = app.add_subcommand("evaluate", "score the test split; writes metrics, confusion and class maps");
    add_run_options(ev, config, over);
    ev->add_option("--model", model_flag, "model file (default <out>/model.bin)");

    std::string cube_flag;
    std::string pred_out;
    auto* pr = app.add_subcommand("predict", "label every pixel of a cube");
    pr->add_option("--model", model_flag)->required();
    pr->add_option("--cube", cube_flag)->required();
    pr->add_option("--out", pred_out)->required();

    std::string axis;
    std::string values;
    auto* sw = app.add_subcommand("sweep", "OA as a function of a, L or window");
    add_run_options(sw, config, over);
    sw->add_option("--axis", axis, "a | L | window");
    sw->add_option("--values", values, "comma list or lo:hi[:step]");

    auto* cv = app.add_subcommand("crossval", "grid search over C and sigma by stratified k-fold");
    add_run_options(cv, config, over);

    CLI11_PARSE(app, argc, argv);

    try {
        if (s->parsed())
            return cmd_synth(synth);
        if (pr->parsed())
            return cmd_predict(model_flag, cube_flag, pred_out);
        RunConfig cfg = configured(config, over);
        if (tr->parsed())
            return cmd_train(cfg);
        if (ev->parsed())
            return cmd_evaluate(cfg, model_flag);
        if (sw->parsed()) {
            if (!axis.empty())
                cfg.sweep_axis = axis;
            if (!values.empty())
                cfg.sweep_values = parse_values(values);
            return cmd_sweep(cfg);
        }
        if (cv->parsed())
            return cmd_crossval(cfg);
    } catch (const std::exception& e) {
        std::cerr << "smlelm: error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
