// phe: train multi-prototype hash encoders on feature data, stream queries
// into known or newly discovered categories, and score the result.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "phe/coding.hpp"
#include "phe/data.hpp"
#include "phe/eval.hpp"
#include "phe/stream.hpp"
#include "phe/trainer.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

void write_manifest(const std::filesystem::path& output, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::filesystem::path path = output;
  path += ".manifest";
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest " + path.string());
  f << "artifact_version=1\n";
  for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototypical hash encoding: on-the-fly category discovery on feature data"};
  app.require_subcommand(1);

  // gvbound
  auto* gv = app.add_subcommand("gvbound", "Print the Gilbert-Varshamov separation target and Hamming-ball radius");
  unsigned gv_bits = 12;
  std::uint64_t gv_classes = 0;
  gv->add_option("--bits", gv_bits, "code length L")->required();
  gv->add_option("--classes", gv_classes, "number of known classes")->required();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-modal feature dataset (PHEF v1)");
  phe::data::SynthConfig synth;
  std::string gen_out;
  gen->add_option("--out", gen_out, "output PHEF file")->required();
  gen->add_option("--known", synth.known_classes, "known classes");
  gen->add_option("--novel", synth.novel_classes, "novel classes");
  gen->add_option("--dim", synth.dim, "feature dimension");
  gen->add_option("--samples-per-class", synth.samples_per_class, "samples per class");
  gen->add_option("--modes", synth.modes_per_class, "modes per class");
  gen->add_option("--between-sigma", synth.between_class_sigma, "between-class sigma");
  gen->add_option("--within-sigma", synth.within_class_sigma, "within-class sigma");
  gen->add_option("--seed", synth.seed, "RNG seed");

  // train
  auto* tr = app.add_subcommand("train", "Train prototypes, hash head, and hash centers on the support split");
  std::string train_data, train_out;
  phe::trainer::TrainConfig tcfg;
  std::vector<std::size_t> encoder_hidden;
  tr->add_option("--data", train_data, "input PHEF file")->required();
  tr->add_option("--out", train_out, "output checkpoint file")->required();
  tr->add_option("--epochs", tcfg.epochs, "training epochs");
  tr->add_option("--batch", tcfg.batch_size, "batch size");
  tr->add_option("--lr-heads", tcfg.lr_heads, "learning rate for heads and prototypes");
  tr->add_option("--lr-encoder", tcfg.lr_encoder, "learning rate for the encoder");
  tr->add_option("--wd", tcfg.weight_decay, "weight decay");
  tr->add_option("--ema-decay", tcfg.ema_decay, "EMA decay");
  tr->add_option("--alpha", tcfg.weights.alpha, "center-optimization weight");
  tr->add_option("--beta", tcfg.weights.beta, "hash-encoding weight");
  tr->add_option("--theta", tcfg.weights.theta, "prototype mask probability");
  tr->add_option("--bits", tcfg.model.code_length, "hash code length L");
  tr->add_option("--feature-dim", tcfg.model.feature_dim, "projected feature dimension");
  tr->add_option("--protos-per-class", tcfg.model.protos_per_class, "prototypes per class k");
  tr->add_option("--epsilon", tcfg.model.epsilon, "prototype similarity stability constant");
  tr->add_option("--tau", tcfg.model.tau, "smoothed sign sharpness");
  tr->add_option("--encoder-hidden", encoder_hidden, "encoder hidden sizes (empty = identity encoder)");
  tr->add_option("--seed", tcfg.seed, "RNG seed");

  // infer
  auto* in = app.add_subcommand("infer", "Stream the query split through Hamming-ball matching");
  std::string infer_ck, infer_data, infer_out, infer_order = "natural", infer_policy = "first";
  std::uint64_t infer_order_seed = 0;
  in->add_option("--checkpoint", infer_ck, "trained checkpoint")->required();
  in->add_option("--data", infer_data, "input PHEF file")->required();
  in->add_option("--out", infer_out, "output prediction file")->required();
  in->add_option("--order", infer_order, "query order: natural|shuffle")->check(CLI::IsMember({"natural", "shuffle"}));
  in->add_option("--order-seed", infer_order_seed, "seed for shuffled order");
  in->add_option("--match-policy", infer_policy, "first|nearest")->check(CLI::IsMember({"first", "nearest"}));

  // eval
  auto* ev = app.add_subcommand("eval", "Strict-Hungarian accuracy of a prediction file");
  std::string eval_preds, eval_data, eval_out;
  std::uint64_t eval_order_seed = 0;
  ev->add_option("--preds", eval_preds, "prediction file from infer")->required();
  ev->add_option("--data", eval_data, "PHEF file the predictions came from")->required();
  ev->add_option("--out", eval_out, "optional report file (also printed)");
  ev->add_option("--order-seed", eval_order_seed, "order seed recorded in the report");

  // report
  auto* rp = app.add_subcommand("report", "Prototype activation table for one dataset row");
  std::string report_ck, report_data;
  std::size_t report_query = 0, report_topn = 5;
  rp->add_option("--checkpoint", report_ck, "trained checkpoint")->required();
  rp->add_option("--data", report_data, "PHEF file")->required();
  rp->add_option("--query-index", report_query, "dataset row to explain")->required();
  rp->add_option("--top-n", report_topn, "activations to list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (gv->parsed()) {
      const auto r = phe::coding::gv_bound(gv_bits, gv_classes);
      std::cout << "d_max=" << r.d_max << " radius=" << r.radius << "\n";
      return 0;
    }
    if (gen->parsed()) {
      const auto ds = phe::data::synth_generate(synth);
      phe::data::save_phef(gen_out, ds);
      write_manifest(gen_out, {{"command", "gen-data"},
                               {"known", std::to_string(synth.known_classes)},
                               {"novel", std::to_string(synth.novel_classes)},
                               {"dim", std::to_string(synth.dim)},
                               {"samples_per_class", std::to_string(synth.samples_per_class)},
                               {"modes", std::to_string(synth.modes_per_class)},
                               {"between_sigma", fmt(synth.between_class_sigma)},
                               {"within_sigma", fmt(synth.within_class_sigma)},
                               {"seed", std::to_string(synth.seed)},
                               {"out", gen_out}});
      return 0;
    }
    if (tr->parsed()) {
      const auto ds = phe::data::load_phef(train_data);
      tcfg.model.input_dim = ds.dim;
      tcfg.model.num_known_classes = ds.num_known_classes();
      tcfg.model.encoder_hidden = encoder_hidden;
      const auto ck = phe::trainer::train(ds, tcfg);
      phe::trainer::save_checkpoint(train_out, ck);
      std::ostringstream hidden;
      for (std::size_t i = 0; i < encoder_hidden.size(); ++i) hidden << (i ? "," : "") << encoder_hidden[i];
      write_manifest(train_out, {{"command", "train"},
                                 {"data", train_data},
                                 {"epochs", std::to_string(tcfg.epochs)},
                                 {"batch", std::to_string(tcfg.batch_size)},
                                 {"lr_heads", fmt(tcfg.lr_heads)},
                                 {"lr_encoder", fmt(tcfg.lr_encoder)},
                                 {"wd", fmt(tcfg.weight_decay)},
                                 {"ema_decay", fmt(tcfg.ema_decay)},
                                 {"alpha", fmt(tcfg.weights.alpha)},
                                 {"beta", fmt(tcfg.weights.beta)},
                                 {"theta", fmt(tcfg.weights.theta)},
                                 {"bits", std::to_string(tcfg.model.code_length)},
                                 {"feature_dim", std::to_string(tcfg.model.feature_dim)},
                                 {"protos_per_class", std::to_string(tcfg.model.protos_per_class)},
                                 {"epsilon", fmt(tcfg.model.epsilon)},
                                 {"tau", fmt(tcfg.model.tau)},
                                 {"encoder_hidden", hidden.str()},
                                 {"d_max", std::to_string(ck.d_max)},
                                 {"seed", std::to_string(tcfg.seed)},
                                 {"out", train_out}});
      std::cout << "trained " << ck.opt.step << " steps, d_max=" << ck.d_max << ", wrote " << train_out << "\n";
      return 0;
    }
    if (in->parsed()) {
      const auto ck = phe::trainer::load_checkpoint(infer_ck);
      const auto ds = phe::data::load_phef(infer_data);
      auto registry = phe::stream::init_registry(
          ck, infer_policy == "nearest" ? phe::stream::MatchPolicy::nearest : phe::stream::MatchPolicy::first);
      for (const auto& w : registry.warnings) std::cerr << "warning: " << w << "\n";
      phe::stream::StreamOrder order;
      order.kind = infer_order == "shuffle" ? phe::stream::OrderKind::shuffled : phe::stream::OrderKind::natural;
      order.seed = infer_order_seed;
      const auto preds = phe::stream::run_stream(ds, registry, ck, order);
      phe::stream::save_predictions(infer_out, preds);
      write_manifest(infer_out, {{"command", "infer"},
                                 {"checkpoint", infer_ck},
                                 {"data", infer_data},
                                 {"order", infer_order},
                                 {"order_seed", std::to_string(infer_order_seed)},
                                 {"match_policy", infer_policy},
                                 {"radius", std::to_string(registry.radius)},
                                 {"estimated_classes", std::to_string(registry.size())},
                                 {"out", infer_out}});
      std::cout << "streamed " << preds.size() << " queries, registry size " << registry.size() << ", wrote "
                << infer_out << "\n";
      return 0;
    }
    if (ev->parsed()) {
      const auto preds = phe::stream::load_predictions(eval_preds);
      const auto ds = phe::data::load_phef(eval_data);
      std::vector<std::size_t> categories;
      std::vector<int> truths;
      std::size_t discovered = 0;
      for (const auto& p : preds) {
        if (p.instance_index >= ds.size()) throw std::runtime_error("eval: prediction row index out of range");
        categories.push_back(p.category);
        truths.push_back(ds.labels[p.instance_index]);
        if (p.is_new) ++discovered;
      }
      auto report = phe::eval::strict_acc(categories, truths, ds.known_classes, ds.query_class_count());
      report.estimated_class_count = ds.num_known_classes() + discovered;
      report.order_seed = eval_order_seed;
      std::cout << phe::eval::format_report(report);
      if (!eval_out.empty()) {
        phe::eval::save_report(eval_out, report);
        write_manifest(eval_out, {{"command", "eval"},
                                  {"preds", eval_preds},
                                  {"data", eval_data},
                                  {"order_seed", std::to_string(eval_order_seed)},
                                  {"out", eval_out}});
      }
      return 0;
    }
    if (rp->parsed()) {
      const auto ck = phe::trainer::load_checkpoint(report_ck);
      const auto ds = phe::data::load_phef(report_data);
      const auto report = phe::eval::prototype_report(ck, ds, report_query, report_topn);
      std::cout << phe::eval::format_proto_report(report);
      return 0;
    }
  } catch (const phe::trainer::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
