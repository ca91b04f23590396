// Fetches table entries privately from two servers; prints "index hex".
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dpir/client.hpp"
#include "dpir/errors.hpp"

using namespace dpir;

int main(int argc, char** argv) {
  CLI::App app{"DPF-PIR client"};
  std::string server_a, server_b, plan_config, indices;
  std::uint64_t seed = 0;
  app.add_option("--server-a", server_a)->required();
  app.add_option("--server-b", server_b)->required();
  app.add_option("--plan-config", plan_config, "client JSON config")->required()->check(CLI::ExistingFile);
  app.add_option("--indices", indices, "comma-separated table indices")->required();
  app.add_option("--seed", seed, "key randomness; 0 = system randomness");
  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<std::uint64_t> wanted;
    std::stringstream ss(indices);
    for (std::string tok; std::getline(ss, tok, ',');) {
      if (!tok.empty()) wanted.push_back(std::stoull(tok));
    }
    const auto config = service::load_client_config(plan_config);
    const service::ClientSession session(config, net::Endpoint::parse(server_a), net::Endpoint::parse(server_b));
    std::unique_ptr<RandomSource> rng;
    if (seed == 0) {
      rng = std::make_unique<SystemRandom>();
    } else {
      rng = std::make_unique<SeededRandom>(seed);
    }
    for (const auto& [index, bytes] : session.fetch_all(wanted, *rng)) {
      std::cout << index << ' ';
      for (auto b : bytes) std::cout << std::hex << std::setw(2) << std::setfill('0') << int{b};
      std::cout << std::dec << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "dpir_client: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
