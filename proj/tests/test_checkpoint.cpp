#include <doctest.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "uniscale/nncore/checkpoint.hpp"

using namespace uniscale::nncore;

namespace {

std::string temp_prefix(const char* tag) {
    return std::string("/tmp/uniscale_ckpt_") + tag;
}

void cleanup(const std::string& prefix) {
    std::remove((prefix + ".bin").c_str());
    std::remove((prefix + ".json").c_str());
}

}  // namespace

TEST_CASE("round trip preserves names, shapes, and exact bits") {
    const std::string prefix = temp_prefix("roundtrip");
    std::vector<NamedTensor> in;
    in.push_back({"w", Tensor::mat(2, 3, {0.1, -0.2, 1e-300, -0.0, 3.5, 7.25})});
    in.push_back({"b", Tensor::vec({std::numeric_limits<double>::infinity(), -1.5})});
    in.push_back({"s", Tensor::scalar(42.0)});
    save_checkpoint(prefix, in);
    auto out = load_checkpoint(prefix);

    REQUIRE(out.size() == 3);
    for (size_t i = 0; i < in.size(); ++i) {
        CHECK(out[i].name == in[i].name);
        REQUIRE(out[i].value.shape == in[i].value.shape);
        for (size_t j = 0; j < in[i].value.numel(); ++j) {
            CHECK(std::bit_cast<uint64_t>(out[i].value.data[j]) ==
                  std::bit_cast<uint64_t>(in[i].value.data[j]));
        }
    }
    cleanup(prefix);
}

TEST_CASE("missing files raise") {
    CHECK_THROWS_AS(load_checkpoint("/tmp/uniscale_ckpt_nonexistent"), std::runtime_error);
}

TEST_CASE("trailing payload bytes raise") {
    const std::string prefix = temp_prefix("trailing");
    save_checkpoint(prefix, {{"x", Tensor::vec({1.0, 2.0})}});
    {
        std::ofstream bin(prefix + ".bin", std::ios::binary | std::ios::app);
        const char extra[8] = {0};
        bin.write(extra, 8);
    }
    CHECK_THROWS_AS(load_checkpoint(prefix), std::runtime_error);
    cleanup(prefix);
}

TEST_CASE("truncated payload raises") {
    const std::string prefix = temp_prefix("truncated");
    save_checkpoint(prefix, {{"x", Tensor::vec({1.0, 2.0, 3.0})}});
    {
        std::ifstream bin(prefix + ".bin", std::ios::binary);
        std::string all((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
        std::ofstream out(prefix + ".bin", std::ios::binary | std::ios::trunc);
        out.write(all.data(), static_cast<std::streamsize>(all.size() - 8));
    }
    CHECK_THROWS_AS(load_checkpoint(prefix), std::runtime_error);
    cleanup(prefix);
}

TEST_CASE("version mismatch raises") {
    const std::string prefix = temp_prefix("version");
    save_checkpoint(prefix, {{"x", Tensor::scalar(1.0)}});
    {
        std::ifstream meta(prefix + ".json");
        std::string all((std::istreambuf_iterator<char>(meta)), std::istreambuf_iterator<char>());
        auto pos = all.find("\"format_version\": 1");
        REQUIRE(pos != std::string::npos);
        all.replace(pos, 19, "\"format_version\": 9");
        std::ofstream out(prefix + ".json", std::ios::trunc);
        out << all;
    }
    CHECK_THROWS_AS(load_checkpoint(prefix), std::runtime_error);
    cleanup(prefix);
}
