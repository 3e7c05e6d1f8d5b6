// Command-line driver: synthetic style datasets, velocity-field training,
// flow-matching sampling, regional style composition, and masked-region
// evaluation, all reproducible from a single --seed per command.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "flowcomp/flowcomp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowcomp;

namespace {

// Applies values from a JSON config to options the user did not pass on the
// command line. Precedence: defaults < --config file < explicit flags.
class JsonBinder {
public:
    template <typename T>
    void bind(CLI::Option* opt, T& var, const std::string& key) {
        entries_.emplace_back(opt, [&var, key](const json& j) {
            if (j.contains(key)) var = j.at(key).get<T>();
        });
    }

    void apply(const json& j) const {
        for (const auto& [opt, fn] : entries_) {
            if (opt->count() == 0) fn(j);
        }
    }

private:
    std::vector<std::pair<CLI::Option*, std::function<void(const json&)>>> entries_;
};

// A config file is either a flat JSON object or a run manifest; manifests
// carry the resolved config under the "config" key.
json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("malformed config '" + path + "': " + e.what());
    }
    if (j.contains("config")) return j.at("config");
    return j;
}

std::string resolve_out(const std::string& out) {
    if (out.empty()) return out;
    const char* root = std::getenv("FLOWCOMP_OUT_ROOT");
    if (root != nullptr && *root != '\0' && fs::path(out).is_relative()) {
        return (fs::path(root) / out).string();
    }
    return out;
}

void refuse_existing(const std::string& path, bool force, const char* what) {
    if (!force && fs::exists(path)) {
        throw config_error(std::string(what) + " '" + path +
                           "' already exists; pass --force to overwrite");
    }
}

StyleDataset::Axis parse_axis(const std::string& axis) {
    if (axis == "h" || axis == "horizontal") return StyleDataset::Axis::Horizontal;
    if (axis == "v" || axis == "vertical") return StyleDataset::Axis::Vertical;
    throw config_error("axis must be 'h' or 'v', got '" + axis + "'");
}

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw config_error("cannot parse integer list entry '" + item + "'");
        }
    }
    return out;
}

// "null" or "<style_id>:<v1>,<v2>,..."
Conditioning parse_condition(const std::string& spec) {
    if (spec.empty() || spec == "null") return Conditioning::null();
    const auto colon = spec.find(':');
    if (colon == std::string::npos) {
        throw config_error("condition spec must be 'null' or 'id:v1,v2,...', got '" + spec + "'");
    }
    int id = 0;
    try {
        id = std::stoi(spec.substr(0, colon));
    } catch (const std::exception&) {
        throw config_error("cannot parse condition id in '" + spec + "'");
    }
    std::vector<float> embedding;
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            embedding.push_back(std::stof(item));
        } catch (const std::exception&) {
            throw config_error("cannot parse embedding entry '" + item + "'");
        }
    }
    if (embedding.empty()) throw config_error("condition embedding must not be empty");
    return Conditioning::style_token(id, std::move(embedding));
}

// Model specs: a path to an FMDL/1 checkpoint, or "gauss:<mu>:<s>" for an
// analytic field with constant mean (shape taken from the masks/depth).
std::shared_ptr<const VelocityModel> load_model_spec(const std::string& spec,
                                                     const Shape& latent, bool have_shape) {
    if (spec.rfind("gauss:", 0) == 0) {
        std::stringstream ss(spec.substr(6));
        std::string mu_s, s_s;
        if (!std::getline(ss, mu_s, ':') || !std::getline(ss, s_s, ':')) {
            throw config_error("gauss model spec must be 'gauss:<mu>:<s>', got '" + spec + "'");
        }
        double mu = 0.0, s = 0.0;
        try {
            mu = std::stod(mu_s);
            s = std::stod(s_s);
        } catch (const std::exception&) {
            throw config_error("cannot parse gauss model spec '" + spec + "'");
        }
        if (!have_shape) {
            throw config_error("gauss model spec needs a latent shape (depth map, masks, or "
                               "--height/--width)");
        }
        return std::make_shared<GaussianFieldModel>(GaussianFieldModel::constant(
            latent, static_cast<float>(mu), static_cast<float>(s)));
    }
    return read_fmdl(spec);
}

DepthMap load_depth(const std::string& path) {
    if (fs::path(path).extension() == ".pgm") return DepthMap(read_pgm(path));
    return DepthMap(read_ftns(path));
}

void maybe_export_pgm(const Tensor& image, const std::string& pgm, float lo, float hi) {
    if (pgm.empty()) return;
    if (image.shape().channels != 1) {
        throw config_error("PGM export needs a 1-channel image, got " + image.shape().str());
    }
    export_pgm(image, pgm, lo, hi);
}

struct ManifestWriter {
    RunManifest manifest;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void add_input(const std::string& path) { manifest.input_digests[path] = digest_file(path); }
    void add_output(const std::string& path) { manifest.outputs.push_back(path); }

    void write(const std::string& path) {
        manifest.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_manifest(path, manifest);
    }
};

// ---------------------------------------------------------------------------
// make-style
// ---------------------------------------------------------------------------

struct MakeStyleArgs {
    std::string kind;
    double mu = 0.0;
    double s = 1.0;
    int period = 4;
    double amplitude = 1.0;
    std::string axis = "v";
    double eta = 0.25;
    int channels = 1;
    int height = 8;
    int width = 8;
    int n = 50;
    std::uint64_t seed = 0;
    std::string out;

    json to_json() const {
        return json{{"kind", kind},     {"mu", mu},         {"s", s},
                    {"period", period}, {"amplitude", amplitude}, {"axis", axis},
                    {"eta", eta},       {"channels", channels},   {"height", height},
                    {"width", width},   {"n", n},           {"seed", seed},
                    {"out", out}};
    }
};

StyleDataset dataset_from_json(const json& cfg) {
    StyleDataset d;
    const std::string kind = cfg.at("kind").get<std::string>();
    if (kind == "gauss") {
        d.kind = StyleDataset::Kind::GaussTexture;
    } else if (kind == "stripes") {
        d.kind = StyleDataset::Kind::Stripes;
    } else if (kind == "checker") {
        d.kind = StyleDataset::Kind::Checker;
    } else {
        throw config_error("unknown style kind '" + kind + "'");
    }
    d.mu = cfg.at("mu").get<double>();
    d.s = cfg.at("s").get<double>();
    d.period = cfg.at("period").get<int>();
    d.amplitude = cfg.at("amplitude").get<double>();
    d.axis = parse_axis(cfg.at("axis").get<std::string>());
    d.eta = cfg.at("eta").get<double>();
    d.shape = Shape{cfg.at("channels").get<int>(), cfg.at("height").get<int>(),
                    cfg.at("width").get<int>()};
    d.validate();
    return d;
}

int run_make_style(const MakeStyleArgs& args, bool force) {
    if (args.n < 1) throw config_error("make-style needs --n >= 1");
    const std::string out_dir = resolve_out(args.out);
    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    refuse_existing(manifest_path, force, "style set manifest");
    fs::create_directories(out_dir);

    ManifestWriter mw;
    mw.manifest.command = "make-style";
    mw.manifest.config = args.to_json();
    const StyleDataset dataset = dataset_from_json(mw.manifest.config);

    // Samples come from one sequential stream of the command seed.
    RngState rng(args.seed);
    for (int i = 0; i < args.n; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "style_%03d.ftns", i);
        const std::string path = (fs::path(out_dir) / name).string();
        write_ftns(path, dataset.sample(rng));
        mw.add_output(path);
    }
    mw.write(manifest_path);
    std::cout << "wrote " << args.n << " samples to " << out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// make-depth
// ---------------------------------------------------------------------------

struct MakeDepthArgs {
    std::string kind = "halfplane";
    std::string axis = "v";
    double fraction = 0.5;
    int center_h = 0;
    int center_w = 0;
    double radius = 0.0;
    int height = 8;
    int width = 8;
    std::string out;

    json to_json() const {
        return json{{"kind", kind},         {"axis", axis},     {"fraction", fraction},
                    {"center_h", center_h}, {"center_w", center_w}, {"radius", radius},
                    {"height", height},     {"width", width},   {"out", out}};
    }
};

int run_make_depth(const MakeDepthArgs& args, bool force) {
    DepthSpec spec;
    const auto axis = (args.axis == "h" || args.axis == "horizontal")
                          ? DepthSpec::Axis::Horizontal
                          : DepthSpec::Axis::Vertical;
    if (args.kind == "halfplane") {
        spec = DepthSpec::half_plane(axis, args.fraction);
    } else if (args.kind == "disk") {
        spec = DepthSpec::disk(args.center_h, args.center_w, args.radius);
    } else if (args.kind == "ramp") {
        spec = DepthSpec::ramp(axis);
    } else {
        throw config_error("unknown depth kind '" + args.kind + "'");
    }
    const std::string out = resolve_out(args.out);
    refuse_existing(out, force, "depth map");
    const DepthMap depth = synth_depth(spec, args.height, args.width);

    ManifestWriter mw;
    mw.manifest.command = "make-depth";
    mw.manifest.config = args.to_json();
    if (fs::path(out).extension() == ".pgm") {
        export_pgm(depth.tensor(), out, 0.0f, 1.0f);
    } else {
        write_ftns(out, depth.tensor());
    }
    mw.add_output(out);
    mw.write(out + ".manifest.json");
    std::cout << "wrote depth map " << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string style_dir;
    int steps = 3500;
    int batch = 16;
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int holdout = 64;
    std::uint64_t seed = 0;
    std::string hidden = "96";
    int embed = 8;
    std::string out;

    json to_json() const {
        return json{{"style_dir", style_dir}, {"steps", steps},   {"batch", batch},
                    {"lr", lr},               {"beta1", beta1},   {"beta2", beta2},
                    {"eps", eps},             {"holdout", holdout}, {"seed", seed},
                    {"hidden", hidden},       {"embed", embed},   {"out", out}};
    }
};

int run_train(const TrainArgs& args, bool force) {
    const std::string out = resolve_out(args.out);
    refuse_existing(out, force, "checkpoint");

    const std::string style_manifest = (fs::path(args.style_dir) / "manifest.json").string();
    const RunManifest style = read_manifest(style_manifest);
    if (style.command != "make-style") {
        throw config_error("'" + style_manifest + "' is not a make-style manifest");
    }
    const StyleDataset dataset = dataset_from_json(style.config);

    MlpConfig mlp_cfg;
    mlp_cfg.latent = dataset.shape;
    mlp_cfg.embed_dim = args.embed;
    mlp_cfg.hidden = parse_int_list(args.hidden);

    TrainConfig cfg;
    cfg.steps = args.steps;
    cfg.batch = args.batch;
    cfg.lr = args.lr;
    cfg.beta1 = args.beta1;
    cfg.beta2 = args.beta2;
    cfg.eps = args.eps;
    cfg.holdout = args.holdout;
    cfg.seed = args.seed;

    ManifestWriter mw;
    mw.manifest.command = "train";
    mw.manifest.config = args.to_json();
    mw.manifest.config["dataset"] = style.config;  // dataset parameters, for the record
    mw.add_input(style_manifest);

    TrainResult result = train_style(dataset, mlp_cfg, cfg);
    write_fmdl(out, result.model);
    mw.add_output(out);
    const std::string loss_csv = out + ".loss.csv";
    write_loss_csv(loss_csv, result.loss_curve);
    mw.add_output(loss_csv);
    mw.write(out + ".manifest.json");
    std::cout << "trained " << args.steps << " steps; held-out loss " << result.holdout_initial
              << " -> " << result.holdout_final << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

struct SampleArgs {
    std::string model;
    std::string condition = "null";
    std::string depth;
    bool structure_hint = false;
    int steps = 28;
    float w = 3.5f;
    std::uint64_t seed = 0;
    int channels = 1;
    int height = 8;
    int width = 8;
    std::string out;
    std::string pgm;
    float lo = -1.0f;
    float hi = 1.0f;

    json to_json() const {
        return json{{"model", model},   {"condition", condition}, {"depth", depth},
                    {"structure_hint", structure_hint}, {"steps", steps}, {"w", w},
                    {"seed", seed},     {"channels", channels},   {"height", height},
                    {"width", width},   {"out", out},             {"pgm", pgm},
                    {"lo", lo},         {"hi", hi}};
    }
};

int run_sample(const SampleArgs& args, bool force) {
    const std::string out = resolve_out(args.out);
    refuse_existing(out, force, "output");

    ManifestWriter mw;
    mw.manifest.command = "sample";
    mw.manifest.config = args.to_json();

    Shape latent{args.channels, args.height, args.width};
    StructureHint hint = StructureHint::none();
    if (!args.depth.empty()) {
        mw.add_input(args.depth);
        const DepthMap depth = load_depth(args.depth);
        latent.height = depth.height();
        latent.width = depth.width();
        if (args.structure_hint) hint = StructureHint::depth_map(depth.tensor());
    }
    auto model = load_model_spec(args.model, latent, true);
    if (args.model.rfind("gauss:", 0) != 0) mw.add_input(args.model);

    ComposeConfig cfg = make_compose_config(args.steps, 0, args.w, args.seed, std::move(hint));
    SampleResult result = sample_single(model, parse_condition(args.condition), cfg);
    write_ftns(out, result.image);
    mw.add_output(out);
    maybe_export_pgm(result.image, args.pgm, args.lo, args.hi);
    if (!args.pgm.empty()) mw.add_output(args.pgm);
    mw.write(out + ".manifest.json");
    std::cout << "sampled " << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// compose
// ---------------------------------------------------------------------------

struct ComposeArgs {
    std::vector<std::string> models;
    std::vector<std::string> conditions;
    std::string depth;
    std::vector<std::string> masks;
    float theta = 0.5f;
    bool structure_hint = false;
    int steps = 28;
    int tau = 8;
    float w = 3.5f;
    std::uint64_t seed = 0;
    int channels = 1;
    int runs = 1;
    std::string out;
    std::string dump_trajectory;
    std::string pgm;
    float lo = -1.0f;
    float hi = 1.0f;

    json to_json() const {
        return json{{"models", models},   {"conditions", conditions}, {"depth", depth},
                    {"masks", masks},     {"theta", theta},
                    {"structure_hint", structure_hint}, {"steps", steps}, {"tau", tau},
                    {"w", w},             {"seed", seed},             {"channels", channels},
                    {"runs", runs},       {"out", out},
                    {"dump_trajectory", dump_trajectory},             {"pgm", pgm},
                    {"lo", lo},           {"hi", hi}};
    }
};

void dump_trajectory_files(const Trajectory& traj, const std::string& dir,
                           ManifestWriter& mw) {
    fs::create_directories(dir);
    for (const StepRecord& rec : traj.steps) {
        for (std::size_t i = 0; i < rec.latents.size(); ++i) {
            char name[48];
            std::snprintf(name, sizeof(name), "step_%03d_style_%zu.ftns", rec.k, i);
            const std::string path = (fs::path(dir) / name).string();
            write_ftns(path, rec.latents[i]);
            mw.add_output(path);
        }
        if (rec.fused_clean) {
            char name[48];
            std::snprintf(name, sizeof(name), "step_%03d_fused.ftns", rec.k);
            const std::string path = (fs::path(dir) / name).string();
            write_ftns(path, *rec.fused_clean);
            mw.add_output(path);
        }
    }
}

int run_compose(const ComposeArgs& args, bool force) {
    if (args.models.empty()) throw config_error("compose needs at least one --model");
    if (!args.conditions.empty() && args.conditions.size() != args.models.size()) {
        throw config_error("--condition count must match --model count");
    }
    if (args.runs < 1) throw config_error("--runs must be >= 1");
    const std::string out = resolve_out(args.out);

    ManifestWriter mw;
    mw.manifest.command = "compose";
    mw.manifest.config = args.to_json();

    // Region masks: explicit mask files, or two masks thresholded from depth.
    std::vector<BinaryMask> mask_list;
    StructureHint hint = StructureHint::none();
    if (!args.masks.empty()) {
        for (const std::string& mp : args.masks) {
            mw.add_input(mp);
            const Tensor mt = read_ftns(mp);
            if (mt.shape().channels != 1) {
                throw config_error("mask '" + mp + "' must have 1 channel");
            }
            mask_list.push_back(BinaryMask::from_data(
                mt.shape().height, mt.shape().width,
                std::vector<float>(mt.data(), mt.data() + mt.size())));
        }
        if (mask_list.size() != args.models.size()) {
            throw config_error("--mask count (" + std::to_string(mask_list.size()) +
                               ") must match --model count (" +
                               std::to_string(args.models.size()) + ")");
        }
        if (!args.depth.empty() && args.structure_hint) {
            mw.add_input(args.depth);
            hint = StructureHint::depth_map(load_depth(args.depth).tensor());
        }
    } else {
        if (args.depth.empty()) {
            throw config_error("compose needs --depth (with --theta) or explicit --mask files");
        }
        mw.add_input(args.depth);
        const DepthMap depth = load_depth(args.depth);
        MaskSet thresholded = threshold_masks(depth, args.theta);
        if (args.models.size() == 1) {
            mask_list.push_back(thresholded.mask(0));
        } else if (args.models.size() == 2) {
            mask_list.push_back(thresholded.mask(0));
            mask_list.push_back(thresholded.mask(1));
        } else {
            throw config_error("depth thresholding yields 2 regions; pass explicit --mask "
                               "files for " + std::to_string(args.models.size()) + " styles");
        }
        if (args.structure_hint) hint = StructureHint::depth_map(depth.tensor());
    }

    const Shape latent{args.channels, mask_list.front().height(), mask_list.front().width()};
    std::vector<StyleBinding> bindings;
    for (std::size_t i = 0; i < args.models.size(); ++i) {
        StyleBinding b;
        b.model = load_model_spec(args.models[i], latent, true);
        if (args.models[i].rfind("gauss:", 0) != 0) mw.add_input(args.models[i]);
        b.condition = args.conditions.empty() ? Conditioning::null()
                                              : parse_condition(args.conditions[i]);
        b.mask = mask_list[i];
        bindings.push_back(std::move(b));
    }

    // Independent runs take seeds base, base+1, ...; outputs are keyed by
    // the run seed so execution order is irrelevant.
    for (int r = 0; r < args.runs; ++r) {
        const std::uint64_t run_seed = args.seed + static_cast<std::uint64_t>(r);
        ComposeConfig cfg = make_compose_config(args.steps, args.tau, args.w, run_seed, hint);
        SampleResult result = compose(bindings, cfg);

        std::string path = out;
        if (args.runs > 1) {
            const fs::path p(out);
            path = (p.parent_path() /
                    (p.stem().string() + "_seed" + std::to_string(run_seed) +
                     p.extension().string()))
                       .string();
        }
        refuse_existing(path, force, "output");
        write_ftns(path, result.image);
        mw.add_output(path);
        if (r == 0) {
            maybe_export_pgm(result.image, args.pgm, args.lo, args.hi);
            if (!args.pgm.empty()) mw.add_output(args.pgm);
            if (!args.dump_trajectory.empty()) {
                dump_trajectory_files(result.trajectory, args.dump_trajectory, mw);
            }
        }
    }
    mw.write(out + ".manifest.json");
    std::cout << "composed " << args.models.size() << " styles -> " << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string image;
    std::string depth;
    std::vector<std::string> masks;
    float theta = 0.5f;
    std::vector<std::string> refs;
    std::string out;

    json to_json() const {
        return json{{"image", image}, {"depth", depth}, {"masks", masks},
                    {"theta", theta}, {"refs", refs},   {"out", out}};
    }
};

std::vector<Tensor> load_ref_dir(const std::string& dir) {
    std::vector<std::string> paths;
    if (!fs::is_directory(dir)) {
        throw config_error("reference directory '" + dir + "' does not exist");
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".ftns") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) {
        throw config_error("reference directory '" + dir + "' holds no .ftns files");
    }
    std::vector<Tensor> images;
    images.reserve(paths.size());
    for (const auto& p : paths) images.push_back(read_ftns(p));
    return images;
}

int run_eval(const EvalArgs& args, bool force) {
    const std::string out = resolve_out(args.out);
    refuse_existing(out, force, "output");

    ManifestWriter mw;
    mw.manifest.command = "eval";
    mw.manifest.config = args.to_json();
    mw.add_input(args.image);
    const Tensor image = read_ftns(args.image);

    std::vector<BinaryMask> mask_list;
    if (!args.masks.empty()) {
        for (const std::string& mp : args.masks) {
            mw.add_input(mp);
            const Tensor mt = read_ftns(mp);
            mask_list.push_back(BinaryMask::from_data(
                mt.shape().height, mt.shape().width,
                std::vector<float>(mt.data(), mt.data() + mt.size())));
        }
    } else {
        if (args.depth.empty()) {
            throw config_error("eval needs --depth (with --theta) or explicit --mask files");
        }
        mw.add_input(args.depth);
        MaskSet thresholded = threshold_masks(load_depth(args.depth), args.theta);
        for (std::size_t i = 0; i < thresholded.count(); ++i) {
            mask_list.push_back(thresholded.mask(i));
        }
    }
    if (args.refs.size() != mask_list.size()) {
        throw config_error("eval needs one --ref directory per region (" +
                           std::to_string(mask_list.size()) + " regions, " +
                           std::to_string(args.refs.size()) + " refs)");
    }
    MaskSet masks = MaskSet::make(mask_list);

    std::vector<FeatureMatrix> references;
    for (const std::string& dir : args.refs) {
        references.push_back(collect_patches(load_ref_dir(dir)));
    }

    const CompositionScore score = composition_score(image, masks, references);
    write_scores_csv(out, score);
    mw.add_output(out);
    mw.write(out + ".manifest.json");
    for (const StyleScore& s : score.styles) {
        std::cout << "style " << s.style_id << ": mmd2 = " << s.mmd2
                  << " (bandwidth " << s.bandwidth << ", " << s.n_region << " region patches, "
                  << s.n_ref << " reference patches)\n";
    }
    std::cout << "average mmd2 = " << score.average << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flow-matching sampling and regional style composition engine"};
    app.require_subcommand(1);

    std::string config_path;
    bool force = false;

    MakeStyleArgs style_args;
    MakeDepthArgs depth_args;
    TrainArgs train_args;
    SampleArgs sample_args;
    ComposeArgs compose_args;
    EvalArgs eval_args;

    JsonBinder style_bind, depth_bind, train_bind, sample_bind, compose_bind, eval_bind;

    auto* cmd_style = app.add_subcommand("make-style", "generate a reference style sample set");
    cmd_style->add_option("--config", config_path, "JSON config or run manifest");
    cmd_style->add_flag("--force", force, "overwrite existing outputs");
    style_bind.bind(cmd_style->add_option("--kind", style_args.kind,
                                          "style kind: gauss|stripes|checker"),
                    style_args.kind, "kind");
    style_bind.bind(cmd_style->add_option("--mu", style_args.mu, "gauss mean"), style_args.mu,
                    "mu");
    style_bind.bind(cmd_style->add_option("--s", style_args.s, "gauss stddev"), style_args.s,
                    "s");
    style_bind.bind(cmd_style->add_option("--period", style_args.period, "pattern period"),
                    style_args.period, "period");
    style_bind.bind(
        cmd_style->add_option("--amplitude", style_args.amplitude, "pattern amplitude"),
        style_args.amplitude, "amplitude");
    style_bind.bind(cmd_style->add_option("--axis", style_args.axis, "stripes axis: h|v"),
                    style_args.axis, "axis");
    style_bind.bind(cmd_style->add_option("--eta", style_args.eta, "noise floor"),
                    style_args.eta, "eta");
    style_bind.bind(cmd_style->add_option("--channels", style_args.channels, "channels"),
                    style_args.channels, "channels");
    style_bind.bind(cmd_style->add_option("--height", style_args.height, "image height"),
                    style_args.height, "height");
    style_bind.bind(cmd_style->add_option("--width", style_args.width, "image width"),
                    style_args.width, "width");
    style_bind.bind(cmd_style->add_option("--n", style_args.n, "sample count"), style_args.n,
                    "n");
    style_bind.bind(cmd_style->add_option("--seed", style_args.seed, "random seed"),
                    style_args.seed, "seed");
    style_bind.bind(cmd_style->add_option("--out", style_args.out, "output directory"),
                    style_args.out, "out");

    auto* cmd_depth = app.add_subcommand("make-depth", "generate a synthetic depth map");
    cmd_depth->add_option("--config", config_path, "JSON config or run manifest");
    cmd_depth->add_flag("--force", force, "overwrite existing outputs");
    depth_bind.bind(cmd_depth->add_option("--kind", depth_args.kind,
                                          "depth kind: halfplane|disk|ramp"),
                    depth_args.kind, "kind");
    depth_bind.bind(cmd_depth->add_option("--axis", depth_args.axis, "axis: h|v"),
                    depth_args.axis, "axis");
    depth_bind.bind(
        cmd_depth->add_option("--fraction", depth_args.fraction, "half-plane near fraction"),
        depth_args.fraction, "fraction");
    depth_bind.bind(cmd_depth->add_option("--center-h", depth_args.center_h, "disk center row"),
                    depth_args.center_h, "center_h");
    depth_bind.bind(cmd_depth->add_option("--center-w", depth_args.center_w, "disk center col"),
                    depth_args.center_w, "center_w");
    depth_bind.bind(cmd_depth->add_option("--radius", depth_args.radius, "disk radius"),
                    depth_args.radius, "radius");
    depth_bind.bind(cmd_depth->add_option("--height", depth_args.height, "map height"),
                    depth_args.height, "height");
    depth_bind.bind(cmd_depth->add_option("--width", depth_args.width, "map width"),
                    depth_args.width, "width");
    depth_bind.bind(cmd_depth->add_option("--out", depth_args.out, "output file (.ftns|.pgm)"),
                    depth_args.out, "out");

    auto* cmd_train = app.add_subcommand("train", "train a velocity field on a style set");
    cmd_train->add_option("--config", config_path, "JSON config or run manifest");
    cmd_train->add_flag("--force", force, "overwrite existing outputs");
    train_bind.bind(
        cmd_train->add_option("--style-dir", train_args.style_dir, "make-style output dir"),
        train_args.style_dir, "style_dir");
    train_bind.bind(cmd_train->add_option("--steps", train_args.steps, "optimizer steps"),
                    train_args.steps, "steps");
    train_bind.bind(cmd_train->add_option("--batch", train_args.batch, "batch size"),
                    train_args.batch, "batch");
    train_bind.bind(cmd_train->add_option("--lr", train_args.lr, "learning rate"),
                    train_args.lr, "lr");
    train_bind.bind(cmd_train->add_option("--beta1", train_args.beta1, "Adam beta1"),
                    train_args.beta1, "beta1");
    train_bind.bind(cmd_train->add_option("--beta2", train_args.beta2, "Adam beta2"),
                    train_args.beta2, "beta2");
    train_bind.bind(cmd_train->add_option("--eps", train_args.eps, "Adam epsilon"),
                    train_args.eps, "eps");
    train_bind.bind(cmd_train->add_option("--holdout", train_args.holdout, "held-out batch"),
                    train_args.holdout, "holdout");
    train_bind.bind(cmd_train->add_option("--seed", train_args.seed, "random seed"),
                    train_args.seed, "seed");
    train_bind.bind(
        cmd_train->add_option("--hidden", train_args.hidden, "hidden sizes, comma separated"),
        train_args.hidden, "hidden");
    train_bind.bind(cmd_train->add_option("--embed", train_args.embed, "embedding dim"),
                    train_args.embed, "embed");
    train_bind.bind(cmd_train->add_option("--out", train_args.out, "checkpoint path (.fmdl)"),
                    train_args.out, "out");

    auto* cmd_sample = app.add_subcommand("sample", "sample one model by Euler integration");
    cmd_sample->add_option("--config", config_path, "JSON config or run manifest");
    cmd_sample->add_flag("--force", force, "overwrite existing outputs");
    sample_bind.bind(
        cmd_sample->add_option("--model", sample_args.model, "checkpoint or gauss:<mu>:<s>"),
        sample_args.model, "model");
    sample_bind.bind(
        cmd_sample->add_option("--condition", sample_args.condition, "null or id:v1,v2,..."),
        sample_args.condition, "condition");
    sample_bind.bind(cmd_sample->add_option("--depth", sample_args.depth, "depth map file"),
                     sample_args.depth, "depth");
    sample_bind.bind(cmd_sample->add_flag("--structure-hint", sample_args.structure_hint,
                                          "feed the depth map to the model"),
                     sample_args.structure_hint, "structure_hint");
    sample_bind.bind(cmd_sample->add_option("--K,--steps", sample_args.steps, "Euler steps"),
                     sample_args.steps, "steps");
    sample_bind.bind(cmd_sample->add_option("--w", sample_args.w, "guidance scale"),
                     sample_args.w, "w");
    sample_bind.bind(cmd_sample->add_option("--seed", sample_args.seed, "random seed"),
                     sample_args.seed, "seed");
    sample_bind.bind(cmd_sample->add_option("--channels", sample_args.channels, "channels"),
                     sample_args.channels, "channels");
    sample_bind.bind(cmd_sample->add_option("--height", sample_args.height, "latent height"),
                     sample_args.height, "height");
    sample_bind.bind(cmd_sample->add_option("--width", sample_args.width, "latent width"),
                     sample_args.width, "width");
    sample_bind.bind(cmd_sample->add_option("--out", sample_args.out, "output image (.ftns)"),
                     sample_args.out, "out");
    sample_bind.bind(cmd_sample->add_option("--pgm", sample_args.pgm, "also export PGM"),
                     sample_args.pgm, "pgm");
    sample_bind.bind(cmd_sample->add_option("--lo", sample_args.lo, "PGM black point"),
                     sample_args.lo, "lo");
    sample_bind.bind(cmd_sample->add_option("--hi", sample_args.hi, "PGM white point"),
                     sample_args.hi, "hi");

    auto* cmd_compose = app.add_subcommand("compose", "regional style composition");
    cmd_compose->add_option("--config", config_path, "JSON config or run manifest");
    cmd_compose->add_flag("--force", force, "overwrite existing outputs");
    compose_bind.bind(cmd_compose->add_option("--model", compose_args.models,
                                              "checkpoint or gauss:<mu>:<s>, one per style"),
                      compose_args.models, "models");
    compose_bind.bind(cmd_compose->add_option("--condition", compose_args.conditions,
                                              "null or id:v1,v2,..., one per style"),
                      compose_args.conditions, "conditions");
    compose_bind.bind(cmd_compose->add_option("--depth", compose_args.depth, "depth map file"),
                      compose_args.depth, "depth");
    compose_bind.bind(
        cmd_compose->add_option("--mask", compose_args.masks, "explicit mask files (.ftns)"),
        compose_args.masks, "masks");
    compose_bind.bind(cmd_compose->add_option("--theta", compose_args.theta, "depth threshold"),
                      compose_args.theta, "theta");
    compose_bind.bind(cmd_compose->add_flag("--structure-hint", compose_args.structure_hint,
                                            "feed the depth map to every model"),
                      compose_args.structure_hint, "structure_hint");
    compose_bind.bind(cmd_compose->add_option("--K,--steps", compose_args.steps, "Euler steps"),
                      compose_args.steps, "steps");
    compose_bind.bind(cmd_compose->add_option("--tau", compose_args.tau, "merge start step"),
                      compose_args.tau, "tau");
    compose_bind.bind(cmd_compose->add_option("--w", compose_args.w, "guidance scale"),
                      compose_args.w, "w");
    compose_bind.bind(cmd_compose->add_option("--seed", compose_args.seed, "random seed"),
                      compose_args.seed, "seed");
    compose_bind.bind(cmd_compose->add_option("--channels", compose_args.channels, "channels"),
                      compose_args.channels, "channels");
    compose_bind.bind(cmd_compose->add_option("--runs", compose_args.runs,
                                              "independent runs with seeds seed, seed+1, ..."),
                      compose_args.runs, "runs");
    compose_bind.bind(cmd_compose->add_option("--out", compose_args.out, "output image (.ftns)"),
                      compose_args.out, "out");
    compose_bind.bind(cmd_compose->add_option("--dump-trajectory", compose_args.dump_trajectory,
                                              "directory for per-step latents"),
                      compose_args.dump_trajectory, "dump_trajectory");
    compose_bind.bind(cmd_compose->add_option("--pgm", compose_args.pgm, "also export PGM"),
                      compose_args.pgm, "pgm");
    compose_bind.bind(cmd_compose->add_option("--lo", compose_args.lo, "PGM black point"),
                      compose_args.lo, "lo");
    compose_bind.bind(cmd_compose->add_option("--hi", compose_args.hi, "PGM white point"),
                      compose_args.hi, "hi");

    auto* cmd_eval = app.add_subcommand("eval", "masked-region similarity scores");
    cmd_eval->add_option("--config", config_path, "JSON config or run manifest");
    cmd_eval->add_flag("--force", force, "overwrite existing outputs");
    eval_bind.bind(cmd_eval->add_option("--image", eval_args.image, "image to score (.ftns)"),
                   eval_args.image, "image");
    eval_bind.bind(cmd_eval->add_option("--depth", eval_args.depth, "depth map file"),
                   eval_args.depth, "depth");
    eval_bind.bind(cmd_eval->add_option("--mask", eval_args.masks, "explicit mask files"),
                   eval_args.masks, "masks");
    eval_bind.bind(cmd_eval->add_option("--theta", eval_args.theta, "depth threshold"),
                   eval_args.theta, "theta");
    eval_bind.bind(cmd_eval->add_option("--ref", eval_args.refs,
                                        "reference sample directory, one per region"),
                   eval_args.refs, "refs");
    eval_bind.bind(cmd_eval->add_option("--out", eval_args.out, "scores CSV path"),
                   eval_args.out, "out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        json file_cfg;
        if (!config_path.empty()) file_cfg = load_config_file(config_path);

        if (cmd_style->parsed()) {
            if (!file_cfg.is_null()) style_bind.apply(file_cfg);
            if (style_args.kind.empty()) throw config_error("make-style needs --kind");
            if (style_args.out.empty()) throw config_error("make-style needs --out");
            return run_make_style(style_args, force);
        }
        if (cmd_depth->parsed()) {
            if (!file_cfg.is_null()) depth_bind.apply(file_cfg);
            if (depth_args.out.empty()) throw config_error("make-depth needs --out");
            return run_make_depth(depth_args, force);
        }
        if (cmd_train->parsed()) {
            if (!file_cfg.is_null()) train_bind.apply(file_cfg);
            if (train_args.style_dir.empty()) throw config_error("train needs --style-dir");
            if (train_args.out.empty()) throw config_error("train needs --out");
            return run_train(train_args, force);
        }
        if (cmd_sample->parsed()) {
            if (!file_cfg.is_null()) sample_bind.apply(file_cfg);
            if (sample_args.model.empty()) throw config_error("sample needs --model");
            if (sample_args.out.empty()) throw config_error("sample needs --out");
            return run_sample(sample_args, force);
        }
        if (cmd_compose->parsed()) {
            if (!file_cfg.is_null()) compose_bind.apply(file_cfg);
            if (compose_args.out.empty()) throw config_error("compose needs --out");
            return run_compose(compose_args, force);
        }
        if (cmd_eval->parsed()) {
            if (!file_cfg.is_null()) eval_bind.apply(file_cfg);
            if (eval_args.image.empty()) throw config_error("eval needs --image");
            if (eval_args.out.empty()) throw config_error("eval needs --out");
            return run_eval(eval_args, force);
        }
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
