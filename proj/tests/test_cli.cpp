#include <doctest.h>

#include <llgm.h>

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_file = fs::temp_directory_path() / ("cli_out_" + std::to_string(counter));
    const fs::path err_file = fs::temp_directory_path() / ("cli_err_" + std::to_string(counter));
    ++counter;
    const std::string cmd = std::string(LLGM_CLI_PATH) + " " + args + " > " + out_file.string() +
                            " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    fs::remove(out_file);
    fs::remove(err_file);
    return r;
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "llgm_cli_tests";
    fs::create_directories(dir);
    return dir;
}

// Deterministic dark test image written through the library.
void write_test_png(const fs::path& path, int h, int w, float level, float wobble) {
    std::vector<float> px(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t at = (static_cast<std::size_t>(y) * w + x) * 3;
            px[at] = level + wobble * std::sin(0.4f * x);
            px[at + 1] = level + wobble * std::cos(0.3f * y);
            px[at + 2] = level + wobble * std::sin(0.2f * (x + y));
        }
    llgm_image* img = nullptr;
    REQUIRE(llgm_image_create(h, w, 3, px.data(), &img) == LLGM_OK);
    REQUIRE(llgm_image_save(img, path.string().c_str()) == LLGM_OK);
    llgm_image_free(img);
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

nlohmann::json parse_report(const std::string& stdout_text) {
    return nlohmann::json::parse(stdout_text);
}

} // namespace

TEST_CASE("cli: fit writes a model and zero iterations stays valid") {
    const fs::path dir = work_dir();
    const fs::path input = dir / "fit_input.png";
    write_test_png(input, 24, 24, 0.3f, 0.1f);

    const fs::path model = dir / "fit_model.llgm";
    RunResult r = run_cli("fit " + q(input) + " --gaussians 40 --iters 25 --seed 3 --out " +
                          q(model));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("final psnr:") != std::string::npos);
    CHECK(fs::exists(model));

    const fs::path init_model = dir / "fit_init.llgm";
    r = run_cli("fit " + q(input) + " --gaussians 40 --iters 0 --seed 3 --out " + q(init_model));
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(init_model));
}

TEST_CASE("cli: missing input exits 2 and names the path") {
    RunResult r = run_cli("fit /definitely/not/here.png --iters 1");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("/definitely/not/here.png") != std::string::npos);
}

TEST_CASE("cli: invalid numeric config rejected before compute") {
    const fs::path dir = work_dir();
    const fs::path input = dir / "reject_input.png";
    write_test_png(input, 16, 16, 0.3f, 0.1f);

    const fs::path model = dir / "never_written.llgm";
    RunResult r = run_cli("fit " + q(input) + " --gaussians 0 --out " + q(model));
    CHECK(r.exit_code == 2);
    CHECK(!fs::exists(model));

    r = run_cli("dict --corpus " + q(dir) + " --k 0");
    CHECK(r.exit_code == 2);

    r = run_cli("enhance " + q(input) + " --model x --dict y --etarget 1.5");
    CHECK(r.exit_code == 2);
}

TEST_CASE("cli: config file merges under flags and rejects unknown keys") {
    const fs::path dir = work_dir();
    const fs::path input = dir / "cfg_input.png";
    write_test_png(input, 24, 24, 0.3f, 0.1f);

    const fs::path cfg = dir / "fit.cfg";
    std::ofstream(cfg) << "iters=2\ngaussians=20\n";
    const fs::path model = dir / "cfg_model.llgm";
    RunResult r = run_cli("fit " + q(input) + " --config " + q(cfg) + " --out " + q(model));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("20 primitives") != std::string::npos);
    CHECK(r.out.find("2 iterations") != std::string::npos);

    r = run_cli("fit " + q(input) + " --config " + q(cfg) + " --iters 1 --out " + q(model));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("1 iterations") != std::string::npos);

    const fs::path bad = dir / "bad.cfg";
    std::ofstream(bad) << "iters=2\nmystery=5\n";
    r = run_cli("fit " + q(input) + " --config " + q(bad));
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("mystery") != std::string::npos);
}

TEST_CASE("cli: dict builds from a corpus directory and exports csv") {
    const fs::path dir = work_dir();
    const fs::path corpus = dir / "corpus";
    fs::create_directories(corpus);
    write_test_png(corpus / "a.png", 16, 16, 0.25f, 0.08f);
    write_test_png(corpus / "b.png", 16, 16, 0.35f, 0.12f);

    const fs::path dict = dir / "corpus_dict.llgd";
    const fs::path csv_dir = dir / "csv";
    RunResult r = run_cli("dict --corpus " + q(corpus) + " --k 2 --p 3 --seed 5 --out " +
                          q(dict) + " --export-csv " + q(csv_dir));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("inertia:") != std::string::npos);
    CHECK(r.out.find("2 learned + 1 identity") != std::string::npos);
    CHECK(fs::exists(dict));
    CHECK(fs::exists(csv_dir / "manifold.csv"));
    CHECK(fs::exists(csv_dir / "curves.csv"));

    // 2 images x 4 default targets = 8 coefficient points, enough for k=2.
    CHECK(r.out.find("8 coefficient points") != std::string::npos);
}

TEST_CASE("cli: enhance pipeline with dumps and quantized weight sums") {
    const fs::path dir = work_dir();
    const fs::path input = dir / "enh_input.png";
    write_test_png(input, 24, 24, 0.18f, 0.06f);

    const fs::path model = dir / "enh_model.llgm";
    RunResult r = run_cli("fit " + q(input) + " --gaussians 50 --iters 30 --seed 1 --out " +
                          q(model));
    REQUIRE(r.exit_code == 0);

    const fs::path corpus = dir / "enh_corpus";
    fs::create_directories(corpus);
    write_test_png(corpus / "a.png", 16, 16, 0.2f, 0.08f);
    write_test_png(corpus / "b.png", 16, 16, 0.3f, 0.1f);
    const fs::path dict = dir / "enh_dict.llgd";
    r = run_cli("dict --corpus " + q(corpus) + " --k 3 --p 4 --seed 2 --out " + q(dict));
    REQUIRE(r.exit_code == 0);

    const fs::path out = dir / "enh_out.png";
    const fs::path gain = dir / "enh_gain.png";
    const fs::path omega_dir = dir / "omega";
    const fs::path log = dir / "enh_log.csv";
    r = run_cli("enhance " + q(input) + " --model " + q(model) + " --dict " + q(dict) +
                " --iters 25 --etarget 0.55 --seed 4 --out " + q(out) + " --dump-gain " +
                q(gain) + " --dump-omega " + q(omega_dir) + " --log " + q(log));
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("final loss:") != std::string::npos);
    CHECK(r.out.find("mean luminance:") != std::string::npos);
    CHECK(fs::exists(out));
    CHECK(fs::exists(gain));
    CHECK(fs::exists(log));

    // K + 1 = 4 weight planes whose quantized per-pixel sum stays near 255.
    std::vector<fs::path> planes;
    for (const auto& e : fs::directory_iterator(omega_dir)) planes.push_back(e.path());
    REQUIRE(planes.size() == 4);

    std::vector<llgm_image*> images;
    for (const fs::path& p : planes) {
        llgm_image* img = nullptr;
        REQUIRE(llgm_image_load(p.string().c_str(), &img) == LLGM_OK);
        images.push_back(img);
    }
    const std::size_t n = static_cast<std::size_t>(llgm_image_height(images[0])) *
                          llgm_image_width(images[0]);
    int worst = 0;
    for (std::size_t px = 0; px < n; ++px) {
        int sum = 0;
        for (llgm_image* img : images)
            sum += static_cast<int>(std::lround(llgm_image_data(img)[px] * 255.0f));
        worst = std::max(worst, std::abs(sum - 255));
    }
    CHECK(worst <= 4); // quantization slack of K + 1 counts
    for (llgm_image* img : images) llgm_image_free(img);

    // Zero-iteration enhance still writes the initialization-state output.
    const fs::path out0 = dir / "enh_out0.png";
    r = run_cli("enhance " + q(input) + " --model " + q(model) + " --dict " + q(dict) +
                " --iters 0 --seed 4 --out " + q(out0));
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out0));
}

TEST_CASE("cli: eval reports identity metrics and omits absent entries") {
    const fs::path dir = work_dir();
    const fs::path img = dir / "eval_img.png";
    write_test_png(img, 20, 20, 0.4f, 0.15f);

    RunResult r = run_cli("eval --pred " + q(img) + " --ref " + q(img));
    REQUIRE(r.exit_code == 0);
    nlohmann::json report = parse_report(r.out);
    CHECK(report["psnr"].get<double>() == doctest::Approx(99.0));
    CHECK(report["ssim"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(report["loe"].get<double>() == doctest::Approx(0.0));
    CHECK(report.contains("de"));
    CHECK(report.contains("eme"));

    r = run_cli("eval --pred " + q(img));
    REQUIRE(r.exit_code == 0);
    report = parse_report(r.out);
    CHECK(!report.contains("psnr"));
    CHECK(!report.contains("ssim"));
    CHECK(!report.contains("loe"));
    CHECK(report.contains("de"));
    CHECK(report.contains("eme"));

    const fs::path black = dir / "eval_black.png";
    const fs::path white = dir / "eval_white.png";
    write_test_png(black, 16, 16, 0.0f, 0.0f);
    write_test_png(white, 16, 16, 1.0f, 0.0f);
    r = run_cli("eval --pred " + q(black) + " --ref " + q(white));
    REQUIRE(r.exit_code == 0);
    CHECK(parse_report(r.out)["psnr"].get<double>() == doctest::Approx(0.0));
}

TEST_CASE("cli: gradcheck prints per-class table and exits clean") {
    RunResult r = run_cli("gradcheck --seed 1");
    CHECK(r.exit_code == 0);
    for (const char* name :
         {"mu", "log_scale", "theta", "color", "opacity_logit", "mix_logits", "mix_bias"})
        CHECK(r.out.find(name) != std::string::npos);
    CHECK(r.out.find("PASS") != std::string::npos);
}

TEST_CASE("cli: rerunning with one seed reproduces files bit for bit") {
    const fs::path dir = work_dir();
    const fs::path input = dir / "det_input.png";
    write_test_png(input, 24, 24, 0.2f, 0.07f);

    const fs::path corpus = dir / "det_corpus";
    fs::create_directories(corpus);
    write_test_png(corpus / "a.png", 16, 16, 0.2f, 0.08f);
    write_test_png(corpus / "b.png", 16, 16, 0.3f, 0.1f);

    auto run_once = [&](const std::string& tag) {
        const fs::path model = dir / ("det_model_" + tag + ".llgm");
        const fs::path dict = dir / ("det_dict_" + tag + ".llgd");
        const fs::path out = dir / ("det_out_" + tag + ".png");
        RunResult r = run_cli("fit " + q(input) + " --gaussians 30 --iters 20 --seed 11 --out " +
                              q(model));
        REQUIRE(r.exit_code == 0);
        r = run_cli("dict --corpus " + q(corpus) + " --k 2 --p 3 --seed 12 --out " + q(dict));
        REQUIRE(r.exit_code == 0);
        r = run_cli("enhance " + q(input) + " --model " + q(model) + " --dict " + q(dict) +
                    " --iters 15 --seed 13 --out " + q(out));
        REQUIRE(r.exit_code == 0);
        return std::array<std::string, 3>{slurp(model), slurp(dict), slurp(out)};
    };

    const auto first = run_once("a");
    const auto second = run_once("b");
    REQUIRE(!first[0].empty());
    CHECK(first[0] == second[0]);
    REQUIRE(!first[1].empty());
    CHECK(first[1] == second[1]);
    REQUIRE(!first[2].empty());
    CHECK(first[2] == second[2]);
}
