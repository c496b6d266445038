#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "vsprefill/config.hpp"
#include "vsprefill/tensor_io.hpp"

using namespace vsp;

namespace {

std::string write_temp(const char* name, const std::string& body) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream os(path);
    os << body;
    return path;
}

}  // namespace

TEST(Config, DocumentedDefaults) {
    const Config cfg;
    EXPECT_EQ(cfg.n, 128u);
    EXPECT_EQ(cfg.d, 16u);
    EXPECT_EQ(cfg.d_h, 64u);
    EXPECT_DOUBLE_EQ(cfg.tau_v, 0.9);
    EXPECT_DOUBLE_EQ(cfg.tau_s, 0.9);
    EXPECT_EQ(cfg.min_budget, 1u);
    EXPECT_EQ(cfg.block, 32u);
    EXPECT_EQ(cfg.steps, 2000u);
    EXPECT_DOUBLE_EQ(cfg.lr_peak, 1e-3);
    EXPECT_EQ(cfg.warmup, 100u);
    EXPECT_EQ(cfg.accumulation, 1u);
    EXPECT_EQ(cfg.seed, 1u);
    EXPECT_DOUBLE_EQ(cfg.eps, 1e-8);
    EXPECT_EQ(cfg.kl_direction, "forward");
    EXPECT_EQ(cfg.slash_mapping, "reverse");
}

TEST(Config, KeyListCoversEveryKnobExactlyOnce) {
    const std::vector<std::string>& keys = config_keys();
    EXPECT_EQ(keys.size(), 15u);
    const Config cfg;
    for (const std::string& key : keys) {
        // every listed key stringifies and round-trips through apply
        const std::string value = config_value(cfg, key);
        Config copy = cfg;
        EXPECT_NO_THROW(apply_config_entry(copy, key, value)) << key;
        EXPECT_EQ(config_value(copy, key), value) << key;
    }
    EXPECT_THROW(config_value(cfg, "bogus"), std::invalid_argument);
}

TEST(Config, ApplyEntryParsesAndValidates) {
    Config cfg;
    apply_config_entry(cfg, "n", "64");
    apply_config_entry(cfg, "tau_v", "0.75");
    apply_config_entry(cfg, "kl_direction", "reverse");
    apply_config_entry(cfg, "slash_mapping", "identity");
    EXPECT_EQ(cfg.n, 64u);
    EXPECT_DOUBLE_EQ(cfg.tau_v, 0.75);
    EXPECT_EQ(cfg.kl_direction, "reverse");
    EXPECT_EQ(cfg.slash_mapping, "identity");

    EXPECT_THROW(apply_config_entry(cfg, "n", "abc"), std::invalid_argument);
    EXPECT_THROW(apply_config_entry(cfg, "n", "12x"), std::invalid_argument);
    EXPECT_THROW(apply_config_entry(cfg, "tau_v", "fast"), std::invalid_argument);
    EXPECT_THROW(apply_config_entry(cfg, "kl_direction", "sideways"), std::invalid_argument);
    EXPECT_THROW(apply_config_entry(cfg, "slash_mapping", "up"), std::invalid_argument);
    EXPECT_THROW(apply_config_entry(cfg, "mystery", "1"), std::invalid_argument);
}

TEST(Config, LoadsFileWithCommentsAndWhitespace) {
    const std::string path = write_temp("vsp_config_ok.cfg",
                                        "# run shape\n"
                                        "n = 64\n"
                                        "\n"
                                        "  d=8   # head dim\n"
                                        "tau_s=0.95\r\n"
                                        "seed = 7\n");
    const Config cfg = load_config_file(path);
    EXPECT_EQ(cfg.n, 64u);
    EXPECT_EQ(cfg.d, 8u);
    EXPECT_DOUBLE_EQ(cfg.tau_s, 0.95);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_EQ(cfg.block, 32u);  // untouched keys keep defaults
    std::filesystem::remove(path);
}

TEST(Config, FileErrors) {
    EXPECT_THROW(load_config_file("/nonexistent/vsp.cfg"), std::runtime_error);
    const std::string bad_line = write_temp("vsp_config_badline.cfg", "just words\n");
    EXPECT_THROW(load_config_file(bad_line), std::invalid_argument);
    std::filesystem::remove(bad_line);
    const std::string unknown = write_temp("vsp_config_unknown.cfg", "blocksize=4\n");
    EXPECT_THROW(load_config_file(unknown), std::invalid_argument);
    std::filesystem::remove(unknown);
}

TEST(Config, ConvertsToTrainAndBudgetConfigs) {
    Config cfg;
    cfg.steps = 500;
    cfg.warmup = 50;
    cfg.lr_peak = 5e-4;
    cfg.accumulation = 2;
    cfg.seed = 9;
    cfg.eps = 1e-6;
    cfg.kl_direction = "reverse";
    cfg.slash_mapping = "identity";
    const TrainConfig t = to_train_config(cfg);
    EXPECT_EQ(t.steps, 500u);
    EXPECT_EQ(t.warmup_steps, 50u);
    EXPECT_DOUBLE_EQ(t.lr_peak, 5e-4);
    EXPECT_EQ(t.accumulation, 2u);
    EXPECT_EQ(t.seed, 9u);
    EXPECT_DOUBLE_EQ(t.eps, 1e-6);
    EXPECT_EQ(t.kl_direction, KlDirection::Reverse);
    EXPECT_EQ(t.slash_mapping, SlashMapping::Identity);

    cfg.tau_v = 0.8;
    cfg.tau_s = 0.7;
    cfg.min_budget = 4;
    const BudgetConfig b = to_budget_config(cfg);
    EXPECT_DOUBLE_EQ(b.tau_v, 0.8);
    EXPECT_DOUBLE_EQ(b.tau_s, 0.7);
    EXPECT_EQ(b.min_budget, 4u);

    Config bad;
    bad.warmup = bad.steps + 1;
    EXPECT_THROW(to_train_config(bad), std::invalid_argument);
    bad = Config{};
    bad.tau_v = 1.5;
    EXPECT_THROW(to_budget_config(bad), std::invalid_argument);
}

TEST(TensorIo, MatrixRoundTripIsExact) {
    Rng rng(121);
    const Matrix m = oracle::random_matrix(rng, 5, 3);
    const std::string path =
        (std::filesystem::temp_directory_path() / "vsp_tensor_matrix.vstn").string();
    write_tensor(path, m);
    const Matrix back = read_tensor(path);
    EXPECT_EQ(back.rows, 5u);
    EXPECT_EQ(back.cols, 3u);
    EXPECT_EQ(back.data, m.data);
    std::filesystem::remove(path);
}

TEST(TensorIo, VectorRoundTripIsExact) {
    const std::vector<double> v = {1.5, -2.25, 0.0, 1e-300, 1e300};
    const std::string path =
        (std::filesystem::temp_directory_path() / "vsp_tensor_vector.vstn").string();
    write_tensor(path, v);
    EXPECT_EQ(read_vector(path), v);
    // rank mismatch in both directions
    EXPECT_THROW(read_tensor(path), std::runtime_error);
    std::filesystem::remove(path);

    Rng rng(122);
    const Matrix m = oracle::random_matrix(rng, 2, 2);
    const std::string mpath =
        (std::filesystem::temp_directory_path() / "vsp_tensor_rank2.vstn").string();
    write_tensor(mpath, m);
    EXPECT_THROW(read_vector(mpath), std::runtime_error);
    std::filesystem::remove(mpath);
}

TEST(TensorIo, HeaderLayoutIsStable) {
    const std::vector<double> v = {1.0};
    const std::string path =
        (std::filesystem::temp_directory_path() / "vsp_tensor_header.vstn").string();
    write_tensor(path, v);
    std::ifstream is(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), {});
    // magic, version=1, ndim=1, dim=1, then one f64: 4+4+4+8+8 bytes
    ASSERT_EQ(bytes.size(), 28u);
    EXPECT_EQ(bytes[0], 'V');
    EXPECT_EQ(bytes[1], 'S');
    EXPECT_EQ(bytes[2], 'T');
    EXPECT_EQ(bytes[3], 'N');
    EXPECT_EQ(bytes[4], 1u);  // version, little-endian
    EXPECT_EQ(bytes[8], 1u);  // ndim
    EXPECT_EQ(bytes[12], 1u); // dims[0]
    std::filesystem::remove(path);
}

TEST(TensorIo, Errors) {
    EXPECT_THROW(read_tensor("/nonexistent/vsp.vstn"), std::runtime_error);

    const std::string bad_magic = write_temp("vsp_tensor_badmagic.vstn", "JUNKxxxxxxxxxxxx");
    EXPECT_THROW(read_tensor(bad_magic), std::runtime_error);
    std::filesystem::remove(bad_magic);

    const std::string truncated = write_temp("vsp_tensor_trunc.vstn", "VS");
    EXPECT_THROW(read_tensor(truncated), std::runtime_error);
    std::filesystem::remove(truncated);

    // valid header promising more payload than the file holds
    const std::string short_payload =
        (std::filesystem::temp_directory_path() / "vsp_tensor_short.vstn").string();
    {
        const std::vector<double> v = {1.0, 2.0, 3.0};
        write_tensor(short_payload, v);
        std::filesystem::resize_file(short_payload, 28);  // keep one of three doubles
    }
    EXPECT_THROW(read_vector(short_payload), std::runtime_error);
    std::filesystem::remove(short_payload);

    // future version number
    const std::string versioned =
        (std::filesystem::temp_directory_path() / "vsp_tensor_version.vstn").string();
    {
        write_tensor(versioned, std::vector<double>{1.0});
        std::fstream f(versioned, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const char nine[4] = {9, 0, 0, 0};
        f.write(nine, 4);
    }
    try {
        read_vector(versioned);
        FAIL() << "expected version error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("unsupported VSTN version 9"), std::string::npos);
    }
    std::filesystem::remove(versioned);
}
