#include <doctest.h>

#include <llgm.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// 3-channel gradient-ish test image with deterministic content.
std::vector<float> ramp_pixels(int h, int w, float scale) {
    std::vector<float> px(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t at = (static_cast<std::size_t>(y) * w + x) * 3;
            px[at] = scale * (0.2f + 0.6f * x / (w - 1));
            px[at + 1] = scale * (0.2f + 0.6f * y / (h - 1));
            px[at + 2] = scale * 0.5f;
        }
    return px;
}

struct ImageHandle {
    llgm_image* ptr = nullptr;
    ~ImageHandle() { llgm_image_free(ptr); }
};

} // namespace

TEST_CASE("capi: image create, save, load roundtrip") {
    const auto px = ramp_pixels(20, 24, 1.0f);
    ImageHandle img;
    REQUIRE(llgm_image_create(20, 24, 3, px.data(), &img.ptr) == LLGM_OK);
    CHECK(llgm_image_height(img.ptr) == 20);
    CHECK(llgm_image_width(img.ptr) == 24);
    CHECK(llgm_image_channels(img.ptr) == 3);
    REQUIRE(llgm_image_data(img.ptr) != nullptr);
    CHECK(llgm_image_data(img.ptr)[0] == px[0]);

    const std::string path = temp_path("capi_roundtrip.png");
    REQUIRE(llgm_image_save(img.ptr, path.c_str()) == LLGM_OK);
    ImageHandle back;
    REQUIRE(llgm_image_load(path.c_str(), &back.ptr) == LLGM_OK);
    CHECK(llgm_image_height(back.ptr) == 20);
    CHECK(llgm_image_width(back.ptr) == 24);
    std::filesystem::remove(path);

    CHECK(llgm_image_create(0, 4, 3, nullptr, &back.ptr) == LLGM_ERROR_INVALID_ARGUMENT);
}

TEST_CASE("capi: missing file reports io error with the path") {
    llgm_image* img = nullptr;
    CHECK(llgm_image_load("/nonexistent/file.png", &img) == LLGM_ERROR_IO);
    CHECK(img == nullptr);
    CHECK(std::string(llgm_last_error()).find("/nonexistent/file.png") != std::string::npos);
}

TEST_CASE("capi: null arguments are rejected") {
    CHECK(llgm_image_load(nullptr, nullptr) == LLGM_ERROR_INVALID_ARGUMENT);
    CHECK(llgm_image_save(nullptr, "x.png") == LLGM_ERROR_INVALID_ARGUMENT);
    CHECK(llgm_last_error() != nullptr);
    llgm_image_free(nullptr); // no-op
    llgm_model_free(nullptr);
    llgm_dict_free(nullptr);
    llgm_enhance_result_free(nullptr);
}

TEST_CASE("capi: fit, model io, enhance, evaluate pipeline") {
    llgm_set_threads(1);
    const auto dark = ramp_pixels(32, 32, 0.2f);
    ImageHandle img;
    REQUIRE(llgm_image_create(32, 32, 3, dark.data(), &img.ptr) == LLGM_OK);

    llgm_fit_options fopts;
    llgm_fit_options_init(&fopts);
    CHECK(fopts.num_primitives == 70000);
    CHECK(fopts.scales == 2);
    fopts.num_primitives = 120;
    fopts.scales = 2;
    fopts.iterations = 60;
    fopts.seed = 9;

    llgm_model* model = nullptr;
    llgm_image* render = nullptr;
    double psnr = 0.0;
    REQUIRE(llgm_fit(img.ptr, &fopts, &model, &render, &psnr) == LLGM_OK);
    CHECK(llgm_model_levels(model) == 2);
    CHECK(llgm_model_primitives(model) == 120);
    CHECK(psnr > 10.0);
    CHECK(llgm_image_height(render) == 32);
    llgm_image_free(render);

    const std::string mpath = temp_path("capi_model.llgm");
    REQUIRE(llgm_model_save(model, mpath.c_str()) == LLGM_OK);
    llgm_model* loaded = nullptr;
    REQUIRE(llgm_model_load(mpath.c_str(), &loaded) == LLGM_OK);
    CHECK(llgm_model_levels(loaded) == 2);
    CHECK(llgm_model_primitives(loaded) == 120);
    std::filesystem::remove(mpath);

    // Tiny corpus for the dictionary: two synthetic dark images on disk.
    std::vector<std::string> corpus_paths;
    for (int i = 0; i < 2; ++i) {
        const auto px = ramp_pixels(16, 16, 0.15f + 0.1f * i);
        llgm_image* c = nullptr;
        REQUIRE(llgm_image_create(16, 16, 3, px.data(), &c) == LLGM_OK);
        const std::string p = temp_path("capi_corpus_" + std::to_string(i) + ".png");
        REQUIRE(llgm_image_save(c, p.c_str()) == LLGM_OK);
        llgm_image_free(c);
        corpus_paths.push_back(p);
    }
    std::vector<const char*> cpaths;
    for (const std::string& p : corpus_paths) cpaths.push_back(p.c_str());

    llgm_dict_options dopts;
    llgm_dict_options_init(&dopts);
    CHECK(dopts.k == 30);
    CHECK(dopts.order == 5);
    dopts.k = 3;
    dopts.order = 2;
    dopts.corpus_tag = "capi-test";
    llgm_dictionary* dict = nullptr;
    double inertia = -1.0;
    REQUIRE(llgm_dict_build(cpaths.data(), cpaths.size(), &dopts, &dict, &inertia) == LLGM_OK);
    CHECK(llgm_dict_atoms(dict) == 3);
    CHECK(llgm_dict_order(dict) == 2);
    CHECK(inertia >= 0.0);

    const std::string dpath = temp_path("capi_dict.llgd");
    REQUIRE(llgm_dict_save(dict, dpath.c_str()) == LLGM_OK);
    llgm_dictionary* dict2 = nullptr;
    REQUIRE(llgm_dict_load(dpath.c_str(), &dict2) == LLGM_OK);
    CHECK(llgm_dict_atoms(dict2) == 3);
    llgm_dict_free(dict2);
    std::filesystem::remove(dpath);

    llgm_enhance_options eopts;
    llgm_enhance_options_init(&eopts);
    CHECK(eopts.iterations == 50000);
    CHECK(eopts.e_target == doctest::Approx(0.6));
    eopts.iterations = 40;
    eopts.lr = 0.05;
    llgm_enhance_result* res = nullptr;
    REQUIRE(llgm_enhance(img.ptr, loaded, dict, &eopts, &res) == LLGM_OK);

    llgm_image* out = nullptr;
    REQUIRE(llgm_enhance_result_output(res, &out) == LLGM_OK);
    CHECK(llgm_image_height(out) == 32);
    CHECK(llgm_image_channels(out) == 3);

    llgm_image* gain = nullptr;
    REQUIRE(llgm_enhance_result_gain(res, &gain) == LLGM_OK);
    CHECK(llgm_image_channels(gain) == 3);
    llgm_image* weights = nullptr;
    REQUIRE(llgm_enhance_result_weights(res, &weights) == LLGM_OK);
    CHECK(llgm_image_channels(weights) == 4); // K + 1
    CHECK(llgm_enhance_result_final_loss(res) > 0.0);
    for (int c = 0; c < 3; ++c) {
        CHECK(llgm_enhance_result_bias(res, c) >= -0.1 - 1e-6);
        CHECK(llgm_enhance_result_bias(res, c) <= 0.1 + 1e-6);
    }

    llgm_metrics full;
    REQUIRE(llgm_evaluate(out, img.ptr, 0, &full) == LLGM_OK);
    CHECK(full.has_psnr);
    CHECK(full.has_ssim);
    CHECK(full.has_loe);
    llgm_metrics nr;
    REQUIRE(llgm_evaluate(out, nullptr, 0, &nr) == LLGM_OK);
    CHECK(!nr.has_psnr);
    CHECK(!nr.has_loe);
    CHECK(nr.de >= 0.0);

    llgm_image_free(weights);
    llgm_image_free(gain);
    llgm_image_free(out);
    llgm_enhance_result_free(res);
    llgm_dict_free(dict);
    llgm_model_free(loaded);
    llgm_model_free(model);
    for (const std::string& p : corpus_paths) std::filesystem::remove(p);
}

TEST_CASE("capi: enhance rejects mismatched resolutions") {
    const auto px = ramp_pixels(16, 16, 0.3f);
    ImageHandle img;
    REQUIRE(llgm_image_create(16, 16, 3, px.data(), &img.ptr) == LLGM_OK);

    llgm_fit_options fopts;
    llgm_fit_options_init(&fopts);
    fopts.num_primitives = 30;
    fopts.iterations = 0;
    llgm_model* model = nullptr;
    REQUIRE(llgm_fit(img.ptr, &fopts, &model, nullptr, nullptr) == LLGM_OK);

    const auto other = ramp_pixels(24, 24, 0.3f);
    ImageHandle wrong;
    REQUIRE(llgm_image_create(24, 24, 3, other.data(), &wrong.ptr) == LLGM_OK);

    llgm_dict_options dopts;
    llgm_dict_options_init(&dopts);
    dopts.k = 1;
    dopts.order = 1;
    const std::string cp = temp_path("capi_corpus_mismatch.png");
    REQUIRE(llgm_image_save(img.ptr, cp.c_str()) == LLGM_OK);
    const char* paths[] = {cp.c_str()};
    llgm_dictionary* dict = nullptr;
    REQUIRE(llgm_dict_build(paths, 1, &dopts, &dict, nullptr) == LLGM_OK);
    std::filesystem::remove(cp);

    llgm_enhance_options eopts;
    llgm_enhance_options_init(&eopts);
    eopts.iterations = 1;
    llgm_enhance_result* res = nullptr;
    CHECK(llgm_enhance(wrong.ptr, model, dict, &eopts, &res) == LLGM_ERROR_INCOMPATIBLE);
    CHECK(res == nullptr);
    CHECK(std::strlen(llgm_last_error()) > 0);

    eopts.iterations = -3;
    CHECK(llgm_enhance(img.ptr, model, dict, &eopts, &res) == LLGM_ERROR_INVALID_ARGUMENT);

    llgm_dict_free(dict);
    llgm_model_free(model);
}

TEST_CASE("capi: corrupt dictionary reports format error") {
    const std::string path = temp_path("capi_bad.llgd");
    {
        std::vector<char> junk(16, 'x');
        FILE* f = std::fopen(path.c_str(), "wb");
        REQUIRE(f != nullptr);
        std::fwrite(junk.data(), 1, junk.size(), f);
        std::fclose(f);
    }
    llgm_dictionary* dict = nullptr;
    CHECK(llgm_dict_load(path.c_str(), &dict) == LLGM_ERROR_FORMAT);
    std::filesystem::remove(path);
}

TEST_CASE("capi: gradcheck reports per-class errors") {
    llgm_gradcheck_entry entries[16];
    size_t count = 0;
    int pass = 0;
    REQUIRE(llgm_gradcheck(4, entries, 16, &count, &pass) == LLGM_OK);
    CHECK(count == 7);
    CHECK(pass == 1);
    for (size_t i = 0; i < count; ++i) {
        CHECK(std::strlen(entries[i].name) > 0);
        CHECK(entries[i].pass == 1);
        CHECK(entries[i].max_error < 1e-3);
    }
}
