#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "drowsy/checkpoint.hpp"
#include "drowsy/rng.hpp"

using drowsy::IoError;
using drowsy::Rng;
using drowsy::Tensor;

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(17);
  std::map<std::string, Tensor> params;
  params.emplace("head.conv1.weight", Tensor({4, 2, 3, 3, 3}));
  params.emplace("head.conv1.bias", Tensor({4}));
  params.emplace("fusion.dense.weight", Tensor({2, 7}));
  params.emplace("scalar_state", Tensor(std::vector<std::size_t>{1}));
  for (auto& [name, t] : params)
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  params.at("scalar_state")[0] = 0.1;  // not exactly representable; survives anyway

  std::stringstream buf;
  drowsy::save_checkpoint(buf, params);
  const auto back = drowsy::load_checkpoint(buf);

  REQUIRE(back.size() == params.size());
  for (const auto& [name, t] : params) {
    REQUIRE(back.count(name) == 1);
    const Tensor& b = back.at(name);
    REQUIRE(b.shape() == t.shape());
    CHECK(b.vec() == t.vec());
  }
}

TEST_CASE("identical maps serialize to identical bytes") {
  std::map<std::string, Tensor> params;
  params.emplace("w", Tensor({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  params.emplace("b", Tensor({3}, {0.5, -0.25, 1e-30}));
  std::stringstream a, b;
  drowsy::save_checkpoint(a, params);
  drowsy::save_checkpoint(b, params);
  CHECK(a.str() == b.str());
  CHECK(a.str().substr(0, 8) == "DRSYCKPT");
}

TEST_CASE("empty checkpoint round trips") {
  std::stringstream buf;
  drowsy::save_checkpoint(buf, {});
  CHECK(drowsy::load_checkpoint(buf).empty());
}

TEST_CASE("checkpoint loader rejects corrupt streams") {
  {
    std::stringstream buf("NOTACKPT rest");
    CHECK_THROWS_WITH(drowsy::load_checkpoint(buf),
                      Catch::Matchers::ContainsSubstring("magic"));
  }
  {
    std::map<std::string, Tensor> params;
    params.emplace("w", Tensor({2, 2}, {1, 2, 3, 4}));
    std::stringstream buf;
    drowsy::save_checkpoint(buf, params);
    const std::string whole = buf.str();
    std::stringstream cut(whole.substr(0, whole.size() - 7));
    CHECK_THROWS_AS(drowsy::load_checkpoint(cut), IoError);
  }
  {
    std::stringstream buf("DRSYCKPT");
    CHECK_THROWS_AS(drowsy::load_checkpoint(buf), IoError);  // no version/count
  }
}

TEST_CASE("checkpoint file io reports the path") {
  CHECK_THROWS_WITH(drowsy::load_checkpoint(std::filesystem::path("/nonexistent/x.ckpt")),
                    Catch::Matchers::ContainsSubstring("x.ckpt"));
}
