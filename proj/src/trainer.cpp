#include "phe/trainer.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "phe/coding.hpp"

namespace phe::trainer {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (lr_encoder <= 0.0 || lr_heads <= 0.0) throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be non-negative");
  if (ema_decay <= 0.0 || ema_decay >= 1.0) throw std::invalid_argument("TrainConfig: ema_decay must lie in (0,1)");
  model.validate();
}

void adamw_step(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                std::vector<double>& v, std::uint64_t step, double lr, double weight_decay,
                const AdamConstants& k) {
  if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
    throw std::invalid_argument("adamw_step: shape mismatch");
  const double bc1 = 1.0 - std::pow(k.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(k.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = k.beta1 * m[i] + (1.0 - k.beta1) * grad[i];
    v[i] = k.beta2 * v[i] + (1.0 - k.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    param[i] -= lr * (mhat / (std::sqrt(vhat) + k.eps) + weight_decay * param[i]);
  }
}

void ema_update(std::vector<double>& shadow, const std::vector<double>& live, double decay) {
  if (shadow.size() != live.size()) throw std::invalid_argument("ema_update: shape mismatch");
  for (std::size_t i = 0; i < shadow.size(); ++i) shadow[i] = decay * shadow[i] + (1.0 - decay) * live[i];
}

Checkpoint train(const data::FeatureDataset& dataset, TrainConfig config) {
  config.validate();
  const auto support = dataset.support_indices();
  if (support.empty()) throw std::invalid_argument("train: empty support split");
  if (dataset.dim != config.model.input_dim)
    throw std::invalid_argument("train: dataset dimension " + std::to_string(dataset.dim) +
                                " but model expects " + std::to_string(config.model.input_dim));
  const std::size_t num_classes = config.model.num_known_classes;
  {
    std::set<int> expected;
    for (std::size_t c = 0; c < num_classes; ++c) expected.insert(static_cast<int>(c));
    if (dataset.known_classes != expected)
      throw std::invalid_argument("train: known-class labels must be exactly 0.." + std::to_string(num_classes - 1));
  }

  // d_max depends only on code length and class count; fixed for the run
  const int d_max = coding::gv_dmax(static_cast<unsigned>(config.model.code_length),
                                    static_cast<std::uint64_t>(num_classes));
  config.weights.d_max = d_max;
  config.weights.validate(config.model.code_length);

  Rng init_rng = Rng::substream(config.seed, "init");
  Rng mask_rng = Rng::substream(config.seed, "mask");
  Rng shuffle_rng = Rng::substream(config.seed, "shuffle");

  model::ParamSet live = model::init_params(config.model, init_rng);
  model::ParamSet ema = live;
  const model::FrozenFC fc(config.model);

  AdamState opt;
  for (const auto& t : live.tensors) {
    opt.m.push_back({t.name, t.shape, std::vector<double>(t.value.size(), 0.0)});
    opt.v.push_back({t.name, t.shape, std::vector<double>(t.value.size(), 0.0)});
  }

  std::vector<std::size_t> order = support;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const std::size_t j = shuffle_rng.below(i + 1);
      std::swap(order[i], order[j]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::vector<double> xdata;
      xdata.reserve(n * dataset.dim);
      std::vector<int> labels(n);
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t idx = order[start + r];
        xdata.insert(xdata.end(), dataset.rows[idx].begin(), dataset.rows[idx].end());
        labels[r] = dataset.labels[idx];
      }

      ++global_step;
      diffcore::Tape tape;
      diffcore::Array total;
      model::BoundParams bound = model::bind_params(tape, live, true);
      try {
        diffcore::Array x = tape.constant({n, dataset.dim}, std::move(xdata));
        diffcore::Array z = model::encode(tape, x, bound, config.model);
        diffcore::Array s = model::proto_similarity(tape, z, bound.at("proto.P"), config.model.epsilon);
        const std::vector<double> mask =
            losses::draw_mask(n, config.model.num_prototypes(), config.weights.theta, mask_rng);
        diffcore::Array lp = losses::loss_p(tape, s, labels, fc, mask);
        diffcore::Array h = model::hash_centers(tape, bound, config.model);
        diffcore::Array b = model::hash_head(tape, z, bound);
        diffcore::Array lf = losses::loss_f(tape, b, h, labels);
        diffcore::Array hsm = model::smoothed_sign(tape, h, config.model.tau);
        diffcore::Array lsep = losses::loss_sep(tape, hsm, d_max);
        diffcore::Array lq = losses::loss_q(tape, hsm);
        total = losses::total_loss(tape, lp, lsep, lq, lf, config.weights);
        tape.backward(total);
      } catch (const std::runtime_error& e) {
        throw NumericError("training step " + std::to_string(global_step) + ": " + e.what());
      }

      for (std::size_t t = 0; t < live.tensors.size(); ++t) {
        auto& tensor = live.tensors[t];
        const double lr = tensor.name.rfind("enc.", 0) == 0 ? config.lr_encoder : config.lr_heads;
        adamw_step(tensor.value, bound.at(tensor.name).grad(), opt.m[t].value, opt.v[t].value, global_step, lr,
                   config.weight_decay);
        ema_update(ema.tensors[t].value, tensor.value, config.ema_decay);
      }
    }
  }
  opt.step = global_step;

  Checkpoint ck;
  ck.config = config;
  ck.live = std::move(live);
  ck.ema = std::move(ema);
  ck.opt = std::move(opt);
  ck.mask_rng_state = mask_rng.serialize();
  ck.shuffle_rng_state = shuffle_rng.serialize();
  ck.d_max = d_max;
  return ck;
}

namespace {

constexpr char kMagic[8] = {'P', 'H', 'E', 'C', 'K', 'P', 'T', '1'};

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("fmt_double failed");
  return std::string(buf, ptr);
}

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_array(std::ostream& os, const std::string& name, const diffcore::Shape& shape,
                 const std::vector<double>& data) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) write_pod<std::uint64_t>(os, d);
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
}

struct RawArray {
  diffcore::Shape shape;
  std::vector<double> data;
};

std::pair<std::string, RawArray> read_array(std::istream& is) {
  const auto name_len = read_pod<std::uint32_t>(is);
  std::string name(name_len, '\0');
  is.read(name.data(), name_len);
  const auto rank = read_pod<std::uint32_t>(is);
  RawArray a;
  for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(read_pod<std::uint64_t>(is));
  a.data.resize(diffcore::shape_numel(a.shape));
  is.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated array " + name);
  return {std::move(name), std::move(a)};
}

std::vector<double> rng_to_doubles(const std::array<std::uint64_t, 6>& s) {
  std::vector<double> out(6);
  for (std::size_t i = 0; i < 6; ++i) out[i] = std::bit_cast<double>(s[i]);
  return out;
}

std::array<std::uint64_t, 6> rng_from_doubles(const std::vector<double>& v) {
  if (v.size() != 6) throw std::runtime_error("checkpoint: bad RNG state length");
  std::array<std::uint64_t, 6> out{};
  for (std::size_t i = 0; i < 6; ++i) out[i] = std::bit_cast<std::uint64_t>(v[i]);
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  os.write(kMagic, sizeof(kMagic));

  std::ostringstream meta;
  const auto& c = ck.config;
  meta << "version=1\n"
       << "epochs=" << c.epochs << "\n"
       << "batch_size=" << c.batch_size << "\n"
       << "lr_encoder=" << fmt_double(c.lr_encoder) << "\n"
       << "lr_heads=" << fmt_double(c.lr_heads) << "\n"
       << "weight_decay=" << fmt_double(c.weight_decay) << "\n"
       << "ema_decay=" << fmt_double(c.ema_decay) << "\n"
       << "alpha=" << fmt_double(c.weights.alpha) << "\n"
       << "beta=" << fmt_double(c.weights.beta) << "\n"
       << "theta=" << fmt_double(c.weights.theta) << "\n"
       << "d_max=" << ck.d_max << "\n"
       << "seed=" << c.seed << "\n"
       << "opt_step=" << ck.opt.step << "\n"
       << "input_dim=" << c.model.input_dim << "\n"
       << "feature_dim=" << c.model.feature_dim << "\n"
       << "code_length=" << c.model.code_length << "\n"
       << "num_known_classes=" << c.model.num_known_classes << "\n"
       << "protos_per_class=" << c.model.protos_per_class << "\n"
       << "epsilon=" << fmt_double(c.model.epsilon) << "\n"
       << "tau=" << fmt_double(c.model.tau) << "\n";
  meta << "encoder_hidden=";
  for (std::size_t i = 0; i < c.model.encoder_hidden.size(); ++i) meta << (i ? "," : "") << c.model.encoder_hidden[i];
  meta << "\n";
  const std::string meta_str = meta.str();
  write_pod<std::uint64_t>(os, meta_str.size());
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  const std::uint32_t count = static_cast<std::uint32_t>(ck.live.tensors.size() * 4 + 2);
  write_pod<std::uint32_t>(os, count);
  for (const auto& t : ck.live.tensors) write_array(os, t.name, t.shape, t.value);
  for (const auto& t : ck.ema.tensors) write_array(os, "ema." + t.name, t.shape, t.value);
  for (const auto& t : ck.opt.m) write_array(os, "opt.m." + t.name, t.shape, t.value);
  for (const auto& t : ck.opt.v) write_array(os, "opt.v." + t.name, t.shape, t.value);
  write_array(os, "rng.mask", {6}, rng_to_doubles(ck.mask_rng_state));
  write_array(os, "rng.shuffle", {6}, rng_to_doubles(ck.shuffle_rng_state));
  if (!os) throw std::runtime_error("save_checkpoint: write failure on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  const auto meta_len = read_pod<std::uint64_t>(is);
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw std::runtime_error("load_checkpoint: truncated metadata");

  std::map<std::string, std::string> kv;
  std::istringstream meta(meta_str);
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("load_checkpoint: malformed metadata line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("load_checkpoint: missing metadata key " + key);
    return it->second;
  };
  auto get_u = [&](const std::string& key) { return std::stoull(get(key)); };
  auto get_d = [&](const std::string& key) { return std::stod(get(key)); };
  if (get("version") != "1") throw std::runtime_error("load_checkpoint: unsupported version " + get("version"));

  Checkpoint ck;
  ck.config.epochs = get_u("epochs");
  ck.config.batch_size = get_u("batch_size");
  ck.config.lr_encoder = get_d("lr_encoder");
  ck.config.lr_heads = get_d("lr_heads");
  ck.config.weight_decay = get_d("weight_decay");
  ck.config.ema_decay = get_d("ema_decay");
  ck.config.weights.alpha = get_d("alpha");
  ck.config.weights.beta = get_d("beta");
  ck.config.weights.theta = get_d("theta");
  ck.d_max = static_cast<int>(get_u("d_max"));
  ck.config.weights.d_max = ck.d_max;
  ck.config.seed = get_u("seed");
  ck.opt.step = get_u("opt_step");
  ck.config.model.input_dim = get_u("input_dim");
  ck.config.model.feature_dim = get_u("feature_dim");
  ck.config.model.code_length = get_u("code_length");
  ck.config.model.num_known_classes = get_u("num_known_classes");
  ck.config.model.protos_per_class = get_u("protos_per_class");
  ck.config.model.epsilon = get_d("epsilon");
  ck.config.model.tau = get_d("tau");
  {
    const std::string& hidden = get("encoder_hidden");
    std::size_t start = 0;
    while (start < hidden.size()) {
      std::size_t pos = hidden.find(',', start);
      if (pos == std::string::npos) pos = hidden.size();
      ck.config.model.encoder_hidden.push_back(std::stoull(hidden.substr(start, pos - start)));
      start = pos + 1;
    }
  }

  const auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, arr] = read_array(is);
    if (name == "rng.mask")
      ck.mask_rng_state = rng_from_doubles(arr.data);
    else if (name == "rng.shuffle")
      ck.shuffle_rng_state = rng_from_doubles(arr.data);
    else if (name.rfind("ema.", 0) == 0)
      ck.ema.tensors.push_back({name.substr(4), std::move(arr.shape), std::move(arr.data)});
    else if (name.rfind("opt.m.", 0) == 0)
      ck.opt.m.push_back({name.substr(6), std::move(arr.shape), std::move(arr.data)});
    else if (name.rfind("opt.v.", 0) == 0)
      ck.opt.v.push_back({name.substr(6), std::move(arr.shape), std::move(arr.data)});
    else
      ck.live.tensors.push_back({std::move(name), std::move(arr.shape), std::move(arr.data)});
  }
  return ck;
}

}  // namespace phe::trainer
