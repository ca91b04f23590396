// Builds tables, synthetic traces and co-design artifacts for the server
// and client.
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dpir/errors.hpp"
#include "dpir/planner.hpp"
#include "dpir/synthetic.hpp"
#include "json.hpp"

using namespace dpir;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"DPF-PIR table builder"};
  app.require_subcommand(1);

  std::uint32_t id = 1;
  std::uint64_t entries = 1 << 14;
  std::uint32_t entry_bytes = 256;
  std::uint64_t seed = 1;
  std::string out;
  auto* random = app.add_subcommand("random", "table with random rows");
  random->add_option("--id", id);
  random->add_option("--entries", entries);
  random->add_option("--entry-bytes", entry_bytes);
  random->add_option("--seed", seed);
  random->add_option("--out", out)->required();

  table::ZipfTraceOptions zo;
  auto* trace = app.add_subcommand("trace", "synthetic Zipf access trace");
  trace->add_option("--entries", zo.num_entries);
  trace->add_option("--inferences", zo.inferences);
  trace->add_option("--lookups", zo.lookups_per_inference);
  trace->add_option("--exponent", zo.exponent);
  trace->add_option("--block-size", zo.block_size, "planted co-occurrence block (0 = none)");
  trace->add_option("--block-prob", zo.block_probability);
  trace->add_option("--seed", seed);
  trace->add_option("--out", out)->required();

  std::string table_path, trace_path, out_dir, prf_name = "aes";
  std::uint64_t hot_size = 0, full_bin = 256, hot_bin = 16;
  std::uint32_t c = 0, q_hot = 0, q_full = 8;
  auto* codesign = app.add_subcommand("codesign", "hot split, co-location and client config");
  codesign->add_option("--table", table_path)->required()->check(CLI::ExistingFile);
  codesign->add_option("--trace", trace_path)->required()->check(CLI::ExistingFile);
  codesign->add_option("--hot-size", hot_size, "0 = no hot table");
  codesign->add_option("--colocation", c);
  codesign->add_option("--full-bin", full_bin);
  codesign->add_option("--hot-bin", hot_bin);
  codesign->add_option("--q-full", q_full);
  codesign->add_option("--q-hot", q_hot);
  codesign->add_option("--prf", prf_name);
  codesign->add_option("--out-dir", out_dir)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (random->parsed()) {
      SeededRandom rng(seed);
      table::store_table(table::random_table(id, entries, entry_bytes, rng), out);
    } else if (trace->parsed()) {
      SeededRandom rng(seed);
      table::store_trace(table::zipf_trace(zo, rng), out);
    } else {
      auto base = std::make_shared<const table::EmbeddingTable>(table::load_table(table_path));
      const auto tr = table::load_trace(trace_path);
      fs::create_directories(out_dir);
      const auto coloc = table::build_colocated(base, tr, c);
      table::store_table(*coloc.table, fs::path(out_dir) / "full.dptb");
      nlohmann::json cfg{{"full_table_id", base->table_id()},
                         {"full_bin_size", full_bin},
                         {"q_full", q_full},
                         {"colocation", c},
                         {"prf", prf_name},
                         {"timeout_ms", 300}};
      if (c > 0) {
        table::write_file(fs::path(out_dir) / "companions.dpcm", table::encode_companion_map(coloc.companion_map, c));
        cfg["companions"] = "companions.dpcm";
      }
      if (hot_size > 0) {
        const auto split = table::build_hot_split(coloc.table, tr, hot_size, q_hot, q_full);
        table::store_table(*split.hot_table, fs::path(out_dir) / "hot.dptb");
        table::write_file(fs::path(out_dir) / "hot.dphm", table::encode_hot_map(split.hot_index_map));
        cfg["hot_table_id"] = split.hot_table->table_id();
        cfg["hot_map"] = "hot.dphm";
        cfg["hot_bin_size"] = hot_bin;
        cfg["q_hot"] = q_hot;
      }
      std::ofstream(fs::path(out_dir) / "client.json") << cfg.dump(2) << '\n';
      // Reject configs the client would refuse.
      (void)planner::planner_config_from_json(cfg.dump());
    }
  } catch (const std::exception& e) {
    std::cerr << "dpir_table: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
