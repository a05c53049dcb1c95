#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "qpi/costmodel.hpp"
#include "qpi/datasets.hpp"
#include "qpi/net.hpp"
#include "qpi/offline.hpp"
#include "qpi/protocol.hpp"
#include "qpi/surgery.hpp"
#include "qpi/train.hpp"
#include "qpi/verify.hpp"

namespace {

using namespace qpi;

// A model file holds either a float graph or an already-quantized model; the
// protocol commands need the latter, so float graphs are quantized on the fly
// with the session field parameters.
QuantizedModel load_protocol_model(const std::string& path, const FieldParams& fp) {
  auto [root, blob] = detail::read_model_pair(path);
  (void)blob;
  std::string kind = root.value("kind", "");
  if (kind == "fixed") return load_quantized(path);
  ModelGraph g = load_model(path);
  return quantize(g, FixedPointCodec(fp));
}

u64 parse_hex_seed(const std::string& s) {
  std::size_t used = 0;
  u64 v = std::stoull(s, &used, 16);
  if (used != s.size()) throw std::invalid_argument("seed: trailing characters in '" + s + "'");
  return v;
}

std::pair<std::string, std::uint16_t> parse_addr(const std::string& addr) {
  std::string::size_type colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == addr.size())
    throw std::invalid_argument("addr: expected HOST:PORT, got '" + addr + "'");
  unsigned long port = std::stoul(addr.substr(colon + 1));
  if (port == 0 || port > 65535) throw std::invalid_argument("addr: port out of range");
  return {addr.substr(0, colon), static_cast<std::uint16_t>(port)};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
}

int cmd_deal(const std::string& model_path, const std::string& out_client,
             const std::string& out_server, const std::string& seed_hex, const FieldParams& fp) {
  QuantizedModel qm = load_protocol_model(model_path, fp);
  u64 seed = parse_hex_seed(seed_hex);
  DealtMaterial dm = deal_offline(qm, seed);
  for (const DealerAuditEntry& e : dm.audit) {
    std::printf("audit layer=%lld elems=%zu %s\n", static_cast<long long>(e.layer), e.elems,
                e.ok ? "ok" : "FAILED");
    if (!e.ok) {
      std::fprintf(stderr, "qpi deal: masked-product audit failed at layer %lld\n",
                   static_cast<long long>(e.layer));
      return 1;
    }
  }
  save_material(out_client, dm.client);
  save_material(out_server, dm.server);
  std::printf("dealt model=%016llx seed=%016llx client=%s server=%s\n",
              static_cast<unsigned long long>(dm.client.hash),
              static_cast<unsigned long long>(seed), out_client.c_str(), out_server.c_str());
  return 0;
}

int cmd_infer(const std::string& role, const std::string& addr, const std::string& model_path,
              const std::string& material_path, const std::string& input_path,
              const std::string& output_path, const std::string& metrics_path,
              const FieldParams& fp) {
  QuantizedModel qm = load_protocol_model(model_path, fp);
  OfflineMaterial mat = load_material(material_path);
  auto [host, port] = parse_addr(addr);
  Transcript transcript;

  auto finish = [&](int code) {
    if (!metrics_path.empty()) write_text(metrics_path, transcript.to_jsonl());
    return code;
  };

  try {
    if (role == "server") {
      TcpListener listener(port);
      TcpChannel ch = listener.accept_one();
      run_server(qm, mat, ch, &transcript);
      std::printf("server done: sent %llu bytes in %llu messages\n",
                  static_cast<unsigned long long>(transcript.total_bytes()),
                  static_cast<unsigned long long>(transcript.total_messages()));
    } else {
      Tensor input = load_tensor_text(input_path);
      TcpChannel ch = tcp_connect(host, port);
      Tensor out = run_client(qm, mat, input, ch, &transcript);
      if (!output_path.empty()) save_tensor_text(out, output_path);
      std::printf("client done: sent %llu bytes in %llu messages\n",
                  static_cast<unsigned long long>(transcript.total_bytes()),
                  static_cast<unsigned long long>(transcript.total_messages()));
      for (double v : out.data) std::printf("%.17g\n", v);
    }
  } catch (const AbortError& e) {
    std::fprintf(stderr, "qpi infer: peer aborted at layer %lld\n",
                 static_cast<long long>(e.layer));
    return finish(1);
  } catch (const ProtocolError& e) {
    std::fprintf(stderr, "qpi infer: %s\n", e.what());
    return finish(1);
  }
  return finish(0);
}

// Switches every normalization layer to inference mode so the saved graph can
// be quantized (folding requires frozen statistics).
void freeze_norm_layers(std::vector<LayerSpec>& layers) {
  for (auto& l : layers) {
    if (auto* h = std::get_if<HerPNLayer>(&l.node)) {
      h->params.training = false;
    } else if (auto* b = std::get_if<BatchNormLayer>(&l.node)) {
      b->params.training = false;
    } else if (auto* r = std::get_if<ResidualBlock>(&l.node)) {
      freeze_norm_layers(r->branch);
    }
  }
}

int cmd_train_toy(const std::string& mode_name, const std::string& dataset_name,
                  const TrainConfig& base, unsigned hidden, unsigned blocks, u64 data_seed,
                  double noise, std::size_t n_train, std::size_t n_test,
                  const std::string& out_jsonl, const std::string& out_csv,
                  const std::string& save_model_path) {
  TrainConfig cfg = base;
  cfg.mode = ablation_mode_from_name(mode_name);
  ToyDataset spec;
  spec.generator = toy_generator_from_name(dataset_name);
  spec.n_train = n_train;
  spec.n_test = n_test;
  spec.noise = noise;
  spec.seed = data_seed;
  auto [train_set, test_set] = make_dataset(spec);
  ModelGraph model = build_ablation_mlp(cfg.mode, cfg.seed, hidden, blocks);
  TrainReport report = train(model, train_set, test_set, cfg);
  if (!out_jsonl.empty()) write_text(out_jsonl, report.to_jsonl());
  if (!out_csv.empty()) write_text(out_csv, report.to_csv());
  if (!save_model_path.empty()) {
    freeze_norm_layers(model.layers);
    save_model(model, save_model_path);
  }
  std::printf("mode=%s dataset=%s epochs=%zu final_loss=%.6g train_acc=%.4f test_acc=%.4f "
              "loss_stability=%.6g diverged=%d\n",
              report.mode.c_str(), dataset_name.c_str(), report.epochs.size(), report.final_loss,
              report.final_train_acc, report.final_test_acc, report.loss_stability,
              report.diverged ? 1 : 0);
  if (report.diverged) {
    std::fprintf(stderr, "qpi train-toy: diverged at epoch %u: %s\n", report.diverge_epoch,
                 report.diagnostic.c_str());
    return 1;
  }
  return 0;
}

int cmd_estimate_cost(const std::string& arch, const std::string& model_path,
                      const std::string& table_path, const std::string& gc_layers,
                      const std::string& out_path) {
  CostTable table;
  if (!table_path.empty()) table = load_cost_table(table_path);
  ArchProfile profile =
      model_path.empty() ? activation_counts(arch) : activation_counts(load_model(model_path));
  Plan mixed = Plan::all_bt();
  if (!gc_layers.empty()) {
    std::istringstream s(gc_layers);
    std::string tok;
    while (std::getline(s, tok, ',')) mixed.gc_layers.insert(std::stoul(tok));
  }
  PlanComparison cmp = estimate_plans(profile, table, mixed);
  std::string report = format_estimate_report(cmp);
  std::fputs(report.c_str(), stdout);
  if (!out_path.empty()) write_text(out_path, report);
  return 0;
}

int cmd_herpnize(const std::string& model_path, const std::string& out_path,
                 const std::string& mode_name) {
  HerpnizeMode mode;
  if (mode_name == "strict")
    mode = HerpnizeMode::strict;
  else if (mode_name == "surgery")
    mode = HerpnizeMode::surgery;
  else
    throw CLI::ValidationError("--mode", "expected strict or surgery");
  ModelGraph m = load_model(model_path);
  ModelGraph replaced = herpnize(m, mode);
  save_model(replaced, out_path);
  std::printf("herpnized %s -> %s (%zu layers)\n", model_path.c_str(), out_path.c_str(),
              replaced.layers.size());
  return 0;
}

int cmd_verify(const std::string& suite) {
  std::vector<CheckResult> results;
  try {
    results = verify_suite(suite);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "qpi verify: %s\n", e.what());
    return 2;
  }
  bool all = true;
  for (const CheckResult& r : results) {
    all = all && r.pass;
    std::printf("[%s] %s: %s (%.1f ms)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str(), r.elapsed_ms);
  }
  std::printf("%zu checks, %s\n", results.size(), all ? "all passed" : "FAILURES PRESENT");
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "qpi: two-party private inference with quadratic activations.\n"
      "Field parameters apply where a float model is quantized (deal, infer);\n"
      "precedence: flags > environment (QPI_MODULUS, QPI_FRAC_BITS) > defaults."};
  app.require_subcommand(1);

  FieldParams fp;
  app.add_option("--modulus", fp.p, "Prime modulus for fixed-point encoding")
      ->envname("QPI_MODULUS")
      ->capture_default_str();
  app.add_option("--frac-bits", fp.frac_bits, "Fractional bits of the fixed-point encoding")
      ->envname("QPI_FRAC_BITS")
      ->capture_default_str();

  auto* deal = app.add_subcommand("deal", "Deal offline material for one inference");
  std::string model_path, out_client, out_server, seed_hex = "1";
  deal->add_option("--model", model_path, "Model file (float graphs are quantized)")->required();
  deal->add_option("--out-client", out_client, "Client material output path")->required();
  deal->add_option("--out-server", out_server, "Server material output path")->required();
  deal->add_option("--seed", seed_hex, "Dealer seed, hex")->capture_default_str();

  auto* infer = app.add_subcommand("infer", "Run one party of an online inference");
  std::string role, addr, material_path, input_path, output_path, metrics_path;
  infer->add_option("--role", role, "client or server")
      ->required()
      ->check(CLI::IsMember({"client", "server"}));
  infer->add_option("--addr", addr, "HOST:PORT (server binds loopback on PORT)")->required();
  infer->add_option("--model", model_path, "Model file, identical on both sides")->required();
  infer->add_option("--material", material_path, "This party's offline material")->required();
  infer->add_option("--input", input_path, "Input tensor file (client only)");
  infer->add_option("--output", output_path, "Decoded output tensor path (client only)");
  infer->add_option("--metrics", metrics_path, "Per-layer traffic metrics, JSON lines");

  auto* train_toy = app.add_subcommand("train-toy", "Train an ablation model on a toy dataset");
  std::string mode_name = "herpn-basiswise", dataset_name = "two-spirals";
  std::string out_jsonl, out_csv;
  TrainConfig tcfg;
  unsigned hidden = 32, blocks = 2;
  u64 data_seed = 1;
  double noise = 0.0;
  std::size_t n_train = 256, n_test = 256;
  train_toy->add_option("--mode", mode_name,
                        "relu-bn, herpn-basiswise, hermite-preact, or hermite-postact")
      ->capture_default_str();
  train_toy->add_option("--dataset", dataset_name, "two-spirals, gaussian-blobs, or rings")
      ->capture_default_str();
  train_toy->add_option("--epochs", tcfg.epochs)->capture_default_str();
  train_toy->add_option("--batch", tcfg.batch)->capture_default_str();
  train_toy->add_option("--lr", tcfg.lr)->capture_default_str();
  train_toy->add_option("--momentum", tcfg.momentum)->capture_default_str();
  train_toy->add_option("--weight-decay", tcfg.weight_decay)->capture_default_str();
  train_toy->add_option("--seed", tcfg.seed, "Weight init and shuffle seed")
      ->capture_default_str();
  train_toy->add_option("--hidden", hidden)->capture_default_str();
  train_toy->add_option("--blocks", blocks)->capture_default_str();
  train_toy->add_option("--data-seed", data_seed)->capture_default_str();
  train_toy->add_option("--noise", noise)->capture_default_str();
  train_toy->add_option("--n-train", n_train)->capture_default_str();
  train_toy->add_option("--n-test", n_test)->capture_default_str();
  train_toy->add_option("--out-jsonl", out_jsonl, "Per-epoch records, JSON lines");
  train_toy->add_option("--out-csv", out_csv, "Per-epoch records, CSV");
  std::string save_model_path;
  train_toy->add_option("--save-model", save_model_path,
                        "Save the trained model, frozen for inference");

  auto* estimate = app.add_subcommand("estimate-cost", "Analytic activation cost of a plan");
  std::string arch = "resnet32", est_model, table_path, gc_layers, est_out;
  estimate->add_option("--arch", arch, "Named architecture profile")->capture_default_str();
  estimate->add_option("--model", est_model, "Derive the profile from a model file instead");
  estimate->add_option("--table", table_path, "Cost table file overriding the defaults");
  estimate->add_option("--gc-layers", gc_layers, "Comma-separated layer indices for the mixed plan");
  estimate->add_option("--out", est_out, "Also write the report to this path");

  auto* herp = app.add_subcommand("herpnize", "Replace activation/normalization pairs");
  std::string herp_out, herp_mode = "strict";
  herp->add_option("--model", model_path, "Input float model")->required();
  herp->add_option("--out", herp_out, "Output model path")->required();
  herp->add_option("--mode", herp_mode, "strict or surgery")->capture_default_str();

  auto* verify = app.add_subcommand("verify", "Run an invariant suite");
  std::string suite = "all";
  verify->add_option("--suite", suite, "field, hermite, beaver, protocol, or all")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (deal->parsed()) return cmd_deal(model_path, out_client, out_server, seed_hex, fp);
    if (infer->parsed()) {
      if (role == "client" && input_path.empty()) {
        std::fprintf(stderr, "qpi infer: --input is required for --role client\n");
        return 2;
      }
      return cmd_infer(role, addr, model_path, material_path, input_path, output_path,
                       metrics_path, fp);
    }
    if (train_toy->parsed())
      return cmd_train_toy(mode_name, dataset_name, tcfg, hidden, blocks, data_seed, noise,
                           n_train, n_test, out_jsonl, out_csv, save_model_path);
    if (estimate->parsed())
      return cmd_estimate_cost(arch, est_model, table_path, gc_layers, est_out);
    if (herp->parsed()) return cmd_herpnize(model_path, herp_out, herp_mode);
    if (verify->parsed()) return cmd_verify(suite);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "qpi: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "qpi: %s\n", e.what());
    return 1;
  }
  return 2;
}
