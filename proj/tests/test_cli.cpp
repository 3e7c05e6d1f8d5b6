#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "flowcomp/depth.hpp"
#include "flowcomp/io.hpp"
#include "flowcomp/metrics.hpp"

using namespace flowcomp;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string& cli_path() {
    static const std::string path = [] {
        const char* env = std::getenv("FLOWCOMP_CLI");
        return env ? std::string(env) : std::string();
    }();
    return path;
}

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "flowcomp_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string wpath(const std::string& name) { return (work_dir() / name).string(); }

CliResult run_cli(const std::string& args) {
    REQUIRE_FALSE(cli_path().empty());
    CliResult r;
    const std::string out_file = wpath("_stdout.txt");
    const std::string err_file = wpath("_stderr.txt");
    const std::string cmd =
        "\"" + cli_path() + "\" " + args + " >\"" + out_file + "\" 2>\"" + err_file + "\"";
    const int status = std::system(cmd.c_str());
    r.exit_code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

}  // namespace

TEST_CASE("cli: missing required parameters exit with code 2") {
    REQUIRE(run_cli("make-style --out " + wpath("nostyle")).exit_code == 2);
    REQUIRE(run_cli("make-style --kind gauss").exit_code == 2);
    REQUIRE(run_cli("train --out " + wpath("no.fmdl")).exit_code == 2);
    REQUIRE(run_cli("compose --out " + wpath("no.ftns")).exit_code == 2);
    REQUIRE(run_cli("no-such-command").exit_code == 2);
    REQUIRE(run_cli("compose --bogus-flag 1").exit_code == 2);
    REQUIRE(run_cli("--help").exit_code == 0);
}

TEST_CASE("cli: make-style is deterministic and reports sane moments") {
    const std::string dir_a = wpath("style_a");
    const std::string dir_b = wpath("style_b");
    const std::string args =
        " --kind gauss --mu 0.8 --s 0.3 --height 8 --width 8 --n 20 --seed 1 --out ";
    REQUIRE(run_cli("make-style" + args + dir_a).exit_code == 0);
    REQUIRE(run_cli("make-style" + args + dir_b).exit_code == 0);

    double sum = 0.0, sq = 0.0;
    long count = 0;
    for (int i = 0; i < 20; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "style_%03d.ftns", i);
        const std::string pa = (fs::path(dir_a) / name).string();
        const std::string pb = (fs::path(dir_b) / name).string();
        REQUIRE(slurp(pa) == slurp(pb));
        const Tensor t = read_ftns(pa);
        for (std::size_t j = 0; j < t.size(); ++j) {
            sum += t[j];
            ++count;
        }
        for (std::size_t j = 0; j < t.size(); ++j) sq += (t[j] - 0.8) * (t[j] - 0.8);
    }
    const double mean = sum / static_cast<double>(count);
    const double var = sq / static_cast<double>(count);
    REQUIRE(std::abs(mean - 0.8) < 0.05);
    REQUIRE(std::abs(var - 0.09) < 0.03);

    // refuses to clobber without --force
    REQUIRE(run_cli("make-style" + args + dir_a).exit_code == 2);
    REQUIRE(run_cli("make-style" + args + dir_a + " --force").exit_code == 0);
}

TEST_CASE("cli: make-depth writes both formats") {
    const std::string f = wpath("depth.ftns");
    const std::string p = wpath("depth.pgm");
    REQUIRE(run_cli("make-depth --kind halfplane --axis v --fraction 0.5 --height 8 --width 8 "
                    "--out " + f).exit_code == 0);
    REQUIRE(run_cli("make-depth --kind ramp --axis h --height 8 --width 8 --out " + p)
                .exit_code == 0);
    const Tensor d = read_ftns(f);
    REQUIRE(d.shape() == Shape{1, 8, 8});
    REQUIRE(d.at(0, 0, 0) == 1.0f);
    REQUIRE(d.at(0, 0, 7) == 0.0f);
    const Tensor ramp = read_pgm(p);
    REQUIRE(ramp.at(0, 0, 0) == 0.0f);
    REQUIRE(ramp.at(0, 0, 7) == 1.0f);

    REQUIRE(run_cli("make-depth --kind disk --center-h 99 --center-w 0 --radius 2 "
                    "--height 8 --width 8 --out " + wpath("bad.ftns")).exit_code == 2);
}

TEST_CASE("cli: train writes checkpoint, loss curve, and manifest") {
    const std::string style_dir = wpath("train_style");
    REQUIRE(run_cli("make-style --kind gauss --mu 0.5 --s 0.4 --height 6 --width 6 --n 8 "
                    "--seed 3 --out " + style_dir).exit_code == 0);
    const std::string ckpt = wpath("model.fmdl");
    const std::string train_args = "train --style-dir " + style_dir +
                                   " --steps 60 --batch 8 --hidden 24 --seed 5 --out " + ckpt;
    REQUIRE(run_cli(train_args).exit_code == 0);
    REQUIRE(fs::exists(ckpt));
    REQUIRE(fs::exists(ckpt + ".loss.csv"));
    REQUIRE(fs::exists(ckpt + ".manifest.json"));

    // loss CSV has a header plus one line per step
    std::istringstream csv(slurp(ckpt + ".loss.csv"));
    std::string line;
    int lines = 0;
    while (std::getline(csv, line)) ++lines;
    REQUIRE(lines == 61);

    // checkpoint loads and matches the dataset shape
    const auto model = read_fmdl(ckpt);
    REQUIRE(model->latent_shape() == Shape{1, 6, 6});

    // resume refused without --force
    REQUIRE(run_cli(train_args).exit_code == 2);
    REQUIRE(run_cli(train_args + " --force").exit_code == 0);
}

TEST_CASE("cli: stripes default set is deterministic with 50 samples") {
    const std::string dir_a = wpath("stripes_a");
    const std::string dir_b = wpath("stripes_b");
    const std::string args = " --kind stripes --period 4 --n 50 --seed 1 --out ";
    REQUIRE(run_cli("make-style" + args + dir_a).exit_code == 0);
    REQUIRE(run_cli("make-style" + args + dir_b).exit_code == 0);
    int files = 0;
    for (const auto& entry : fs::directory_iterator(dir_a)) {
        if (entry.path().extension() == ".ftns") ++files;
    }
    REQUIRE(files == 50);
    for (int i : {0, 17, 49}) {
        char name[32];
        std::snprintf(name, sizeof(name), "style_%03d.ftns", i);
        REQUIRE(slurp((fs::path(dir_a) / name).string()) ==
                slurp((fs::path(dir_b) / name).string()));
    }
}

TEST_CASE("cli: default train config halves the loss curve on stripes") {
    const std::string style_dir = wpath("default_stripes");
    REQUIRE(run_cli("make-style --kind stripes --seed 1 --out " + style_dir).exit_code == 0);
    const std::string ckpt = wpath("default_stripes.fmdl");
    REQUIRE(run_cli("train --style-dir " + style_dir + " --seed 2 --out " + ckpt).exit_code == 0);

    // final/initial ratio over 100-step window means; pilot run reached 0.24
    std::istringstream csv(slurp(ckpt + ".loss.csv"));
    std::string line;
    std::getline(csv, line);  // header
    std::vector<double> losses;
    while (std::getline(csv, line)) {
        losses.push_back(std::stod(line.substr(line.find(',') + 1)));
    }
    REQUIRE(losses.size() == 3500);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 100; ++i) {
        head += losses[static_cast<std::size_t>(i)];
        tail += losses[losses.size() - 100 + static_cast<std::size_t>(i)];
    }
    REQUIRE(tail / head < 0.5);

    // the manifest records the dataset parameters alongside the train config
    const RunManifest m = read_manifest(ckpt + ".manifest.json");
    REQUIRE(m.config.at("dataset").at("kind").get<std::string>() == "stripes");
    REQUIRE(m.config.at("steps").get<int>() == 3500);
}

TEST_CASE("cli: compose with analytic models splits regions by depth") {
    const std::string depth = wpath("compose_depth.ftns");
    REQUIRE(run_cli("make-depth --kind halfplane --axis v --fraction 0.5 --height 8 --width 8 "
                    "--out " + depth).exit_code == 0);
    const std::string out = wpath("composed.ftns");
    REQUIRE(run_cli("compose --model gauss:2:0.5 --model gauss:-2:0.5 --depth " + depth +
                    " --theta 0.5 --K 28 --tau 8 --w 3.5 --seed 11 --out " + out)
                .exit_code == 0);

    const Tensor img = read_ftns(out);
    const MaskSet masks = threshold_masks(DepthMap(read_ftns(depth)), 0.5f);
    const RegionStats left = region_moments(img, masks.mask(0));
    const RegionStats right = region_moments(img, masks.mask(1));
    REQUIRE(std::abs(left.mean - 2.0) < 0.6);
    REQUIRE(std::abs(right.mean + 2.0) < 0.6);

    // re-run from the manifest reproduces the image byte for byte
    const std::string out2 = wpath("composed2.ftns");
    REQUIRE(run_cli("compose --config " + out + ".manifest.json --out " + out2).exit_code == 0);
    REQUIRE(slurp(out) == slurp(out2));
}

TEST_CASE("cli: single-model compose over a constant depth equals sample") {
    const std::string depth = wpath("const_depth.ftns");
    REQUIRE(run_cli("make-depth --kind halfplane --axis v --fraction 1.0 --height 6 --width 6 "
                    "--out " + depth).exit_code == 0);
    const std::string composed = wpath("single_composed.ftns");
    const std::string sampled = wpath("single_sampled.ftns");
    REQUIRE(run_cli("compose --model gauss:0.5:1.0 --depth " + depth +
                    " --K 12 --tau 0 --w 0 --seed 21 --out " + composed).exit_code == 0);
    REQUIRE(run_cli("sample --model gauss:0.5:1.0 --height 6 --width 6 --K 12 --w 0 --seed 21 "
                    "--out " + sampled).exit_code == 0);
    REQUIRE(slurp(composed) == slurp(sampled));

    // with the default merge window the w=0 collapse still holds
    const std::string merged = wpath("single_merged.ftns");
    REQUIRE(run_cli("compose --model gauss:0.5:1.0 --depth " + depth +
                    " --K 12 --tau 4 --w 0 --seed 21 --out " + merged).exit_code == 0);
    const Tensor a = read_ftns(merged);
    const Tensor b = read_ftns(sampled);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(std::abs(a[i] - b[i]) < 1e-6f);
    }
}

TEST_CASE("cli: compose --runs keys outputs by seed and dumps trajectories") {
    const std::string depth = wpath("runs_depth.ftns");
    REQUIRE(run_cli("make-depth --kind halfplane --axis v --fraction 0.5 --height 6 --width 6 "
                    "--out " + depth).exit_code == 0);

    const std::string out = wpath("runs.ftns");
    REQUIRE(run_cli("compose --model gauss:1:0.5 --model gauss:-1:0.5 --depth " + depth +
                    " --K 6 --tau 2 --w 0 --seed 40 --runs 2 --out " + out).exit_code == 0);
    REQUIRE(fs::exists(wpath("runs_seed40.ftns")));
    REQUIRE(fs::exists(wpath("runs_seed41.ftns")));

    // a single run with the matching seed reproduces the keyed output
    const std::string single = wpath("runs_single.ftns");
    REQUIRE(run_cli("compose --model gauss:1:0.5 --model gauss:-1:0.5 --depth " + depth +
                    " --K 6 --tau 2 --w 0 --seed 41 --out " + single).exit_code == 0);
    REQUIRE(slurp(single) == slurp(wpath("runs_seed41.ftns")));

    // trajectory dump: one file per step per style plus fused merge records
    const std::string traj = wpath("traj");
    REQUIRE(run_cli("compose --model gauss:1:0.5 --model gauss:-1:0.5 --depth " + depth +
                    " --K 6 --tau 2 --w 0 --seed 40 --dump-trajectory " + traj + " --out " +
                    wpath("traj.ftns")).exit_code == 0);
    int latents = 0, fused = 0;
    for (const auto& entry : fs::directory_iterator(traj)) {
        const std::string name = entry.path().filename().string();
        if (name.find("_style_") != std::string::npos) ++latents;
        if (name.find("_fused") != std::string::npos) ++fused;
    }
    REQUIRE(latents == 12);  // 6 steps x 2 styles
    REQUIRE(fused == 2);     // merging records for k <= tau
}

TEST_CASE("cli: FLOWCOMP_OUT_ROOT prefixes relative outputs") {
    const std::string root = wpath("outroot");
    fs::create_directories(root);
    setenv("FLOWCOMP_OUT_ROOT", root.c_str(), 1);
    const CliResult r =
        run_cli("make-depth --kind ramp --axis h --height 4 --width 4 --out rooted.ftns");
    unsetenv("FLOWCOMP_OUT_ROOT");
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(fs::path(root) / "rooted.ftns"));
    REQUIRE(fs::exists(fs::path(root) / "rooted.ftns.manifest.json"));
}

TEST_CASE("cli: mismatched depth and model shapes exit 2 naming both shapes") {
    const std::string style_dir = wpath("mismatch_style");
    REQUIRE(run_cli("make-style --kind gauss --mu 0 --s 1 --height 8 --width 8 --n 4 --seed 9 "
                    "--out " + style_dir).exit_code == 0);
    const std::string ckpt = wpath("mismatch.fmdl");
    REQUIRE(run_cli("train --style-dir " + style_dir + " --steps 5 --batch 4 --hidden 8 "
                    "--out " + ckpt).exit_code == 0);
    const std::string depth = wpath("mismatch_depth.ftns");
    REQUIRE(run_cli("make-depth --kind halfplane --height 6 --width 6 --out " + depth)
                .exit_code == 0);

    const CliResult r = run_cli("compose --model " + ckpt + " --model " + ckpt + " --depth " +
                                depth + " --out " + wpath("mismatch_out.ftns"));
    REQUIRE(r.exit_code == 2);
    REQUIRE(r.err.find("(1,8,8)") != std::string::npos);
    REQUIRE(r.err.find("(6,6)") != std::string::npos);
}

TEST_CASE("cli: eval scores a composed image against reference sets") {
    const std::string stripes_dir = wpath("eval_stripes");
    const std::string checker_dir = wpath("eval_checker");
    REQUIRE(run_cli("make-style --kind stripes --period 4 --amplitude 1 --eta 0.2 --height 12 "
                    "--width 12 --n 12 --seed 31 --out " + stripes_dir).exit_code == 0);
    REQUIRE(run_cli("make-style --kind checker --period 4 --amplitude 1 --eta 0.2 --height 12 "
                    "--width 12 --n 12 --seed 32 --out " + checker_dir).exit_code == 0);
    const std::string depth = wpath("eval_depth.ftns");
    REQUIRE(run_cli("make-depth --kind halfplane --axis v --fraction 0.5 --height 12 --width 12 "
                    "--out " + depth).exit_code == 0);

    // score one of the stripes samples against (stripes, checker) references
    const std::string image = (fs::path(stripes_dir) / "style_000.ftns").string();
    const std::string csv = wpath("scores.csv");
    const CliResult r = run_cli("eval --image " + image + " --depth " + depth +
                                " --theta 0.5 --ref " + stripes_dir + " --ref " + checker_dir +
                                " --out " + csv);
    REQUIRE(r.exit_code == 0);
    const std::string text = slurp(csv);
    REQUIRE(text.rfind("style_id,mmd2,bandwidth,n_region,n_ref\n", 0) == 0);
    REQUIRE(text.find("average,") != std::string::npos);

    // mismatched ref count
    REQUIRE(run_cli("eval --image " + image + " --depth " + depth + " --ref " + stripes_dir +
                    " --out " + wpath("scores2.csv")).exit_code == 2);
}

TEST_CASE("cli: eval ranks pasted compositions through files") {
    const std::string stripes_dir = wpath("rank_stripes");
    const std::string checker_dir = wpath("rank_checker");
    const std::string mkargs = " --period 4 --amplitude 1 --eta 0.2 --height 12 --width 12 "
                               "--n 16 --out ";
    REQUIRE(run_cli("make-style --kind stripes --seed 51" + mkargs + stripes_dir).exit_code == 0);
    REQUIRE(run_cli("make-style --kind checker --seed 52" + mkargs + checker_dir).exit_code == 0);
    const std::string depth = wpath("rank_depth.ftns");
    REQUIRE(run_cli("make-depth --kind halfplane --axis v --fraction 0.5 --height 12 --width 12 "
                    "--out " + depth).exit_code == 0);

    // paste fresh samples (seeds disjoint from the reference sets) into the
    // two half-plane regions, correctly and swapped
    const std::string fresh_s = wpath("fresh_stripes");
    const std::string fresh_c = wpath("fresh_checker");
    REQUIRE(run_cli("make-style --kind stripes --seed 61" + mkargs + fresh_s).exit_code == 0);
    REQUIRE(run_cli("make-style --kind checker --seed 62" + mkargs + fresh_c).exit_code == 0);
    const Tensor s_img = read_ftns((fs::path(fresh_s) / "style_000.ftns").string());
    const Tensor c_img = read_ftns((fs::path(fresh_c) / "style_000.ftns").string());
    const MaskSet masks = threshold_masks(DepthMap(read_ftns(depth)), 0.5f);
    Tensor correct(s_img.shape());
    Tensor swapped(s_img.shape());
    for (int h = 0; h < 12; ++h) {
        for (int w = 0; w < 12; ++w) {
            const bool left = masks.mask(0).at(h, w) == 1.0f;
            correct.at(0, h, w) = left ? s_img.at(0, h, w) : c_img.at(0, h, w);
            swapped.at(0, h, w) = left ? c_img.at(0, h, w) : s_img.at(0, h, w);
        }
    }
    write_ftns(wpath("rank_correct.ftns"), correct);
    write_ftns(wpath("rank_swapped.ftns"), swapped);

    auto average_of = [&](const std::string& image, const std::string& csv) {
        REQUIRE(run_cli("eval --image " + image + " --depth " + depth + " --ref " + stripes_dir +
                        " --ref " + checker_dir + " --out " + csv).exit_code == 0);
        std::istringstream in(slurp(csv));
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("average,", 0) == 0) {
                return std::stod(line.substr(8, line.find(',', 8) - 8));
            }
        }
        FAIL("no average row in " + csv);
        return 0.0;
    };
    const double good = average_of(wpath("rank_correct.ftns"), wpath("rank_good.csv"));
    const double bad = average_of(wpath("rank_swapped.ftns"), wpath("rank_bad.csv"));
    INFO("correct " << good << " vs swapped " << bad);
    REQUIRE(good <= 0.05);
    REQUIRE(bad > good);

    // single style, full mask: one region, one reference set
    const std::string full_mask = wpath("rank_full_mask.ftns");
    write_ftns(full_mask, Tensor(Shape{1, 12, 12}, 1.0f));
    const std::string csv = wpath("rank_single.csv");
    REQUIRE(run_cli("eval --image " + wpath("rank_correct.ftns") + " --mask " + full_mask +
                    " --ref " + stripes_dir + " --out " + csv).exit_code == 0);
    REQUIRE(slurp(csv).find("average,") != std::string::npos);
}

TEST_CASE("cli: numerical failures exit with code 3") {
    // craft an image whose payload holds a NaN; moments become non-finite
    const std::string bad = wpath("nan.ftns");
    {
        std::ofstream out(bad, std::ios::binary);
        out << "FTNS 1 1 2 2\n";
        const unsigned char nan_bytes[4] = {0x00, 0x00, 0xC0, 0x7F};
        for (int i = 0; i < 4; ++i) {
            out.write(reinterpret_cast<const char*>(nan_bytes), 4);
        }
    }
    const std::string depth = wpath("nan_depth.ftns");
    REQUIRE(run_cli("make-depth --kind halfplane --fraction 1.0 --height 2 --width 2 --out " +
                    depth).exit_code == 0);
    const std::string refs = wpath("nan_refs");
    REQUIRE(run_cli("make-style --kind gauss --mu 0 --s 1 --height 4 --width 4 --n 4 --seed 1 "
                    "--out " + refs).exit_code == 0);
    const CliResult r = run_cli("eval --image " + bad + " --mask " + depth + " --ref " + refs +
                                " --out " + wpath("nan_scores.csv"));
    REQUIRE(r.exit_code == 3);
}
