#include "tergan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "tergan/errors.hpp"

namespace tergan {
namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[8] = {'T', 'E', 'R', 'G', 'A', 'N', 'C', 'K'};

struct Entry {
  std::string name;
  Tensor* tensor;
};

/// Every tensor a checkpoint carries, in a fixed order.
std::vector<Entry> tensor_entries(TrainState& s) {
  std::vector<Entry> out;
  auto refs = s.model.all_refs();
  for (auto* p : refs.params) out.push_back({p->name, &p->value});
  for (auto& b : refs.buffers) out.push_back({b.name, b.value});
  for (auto& [name, opt] : s.optimizers.named()) {
    auto& m = opt->first_moments();
    auto& v = opt->second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) out.push_back({"optim/" + name + "/m/" + std::to_string(i), &m[i]});
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back({"optim/" + name + "/v/" + std::to_string(i), &v[i]});
  }
  return out;
}

json adam_json(const Adam<float>& a) {
  const auto& c = a.config();
  return json{{"steps", a.steps()},
              {"moments", a.first_moments().size()},
              {"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"epsilon", c.epsilon}};
}

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

template <class U>
U get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(U) > in.size()) throw IntegrityError("checkpoint is truncated");
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

void save_checkpoint(const TrainState& state_in, const std::filesystem::path& path) {
  // Reading only; the reference collectors are non-const.
  auto& state = const_cast<TrainState&>(state_in);
  json h;
  h["format_version"] = kCheckpointFormatVersion;
  h["network"] = json::parse(serialize_network(state.model.spec));
  h["augmentation"] = json::parse(serialize_augmentation(state.augmentation));
  h["stage"] = to_string(state.stage);
  h["global_step"] = state.global_step;
  h["stage_step"] = state.stage_step;
  std::ostringstream rng;
  rng << state.rng;
  h["rng"] = rng.str();
  h["heads"] = {{"expression", state.model.expr_head.has_value()}, {"identity", state.model.id_head.has_value()}};
  json opts = json::object();
  for (auto& [name, opt] : state.optimizers.named()) opts[name] = adam_json(*opt);
  h["optimizers"] = opts;

  json index = json::array();
  std::size_t offset = 0;
  auto entries = tensor_entries(state);
  for (const auto& e : entries) {
    index.push_back({{"name", e.name}, {"shape", e.tensor->shape()}, {"offset", offset}});
    offset += e.tensor->size();
  }
  h["tensors"] = index;
  const std::string header = h.dump();

  std::string out;
  out.reserve(header.size() + offset * sizeof(float) + 64);
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& e : entries)
    out.append(reinterpret_cast<const char*>(e.tensor->ptr()), e.tensor->size() * sizeof(float));
  put<std::uint32_t>(out, crc_of(out.data(), out.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

TrainState load_checkpoint(const std::filesystem::path& path, const std::optional<NetworkSpec>& expected_spec) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string in = ss.str();

  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0)
    throw IntegrityError(path.string() + " is not a checkpoint");
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(in, pos);
  if (version != kCheckpointFormatVersion)
    throw ConfigError("checkpoint format version " + std::to_string(version) + " is not supported (this build reads " +
                      std::to_string(kCheckpointFormatVersion) + ")");
  if (in.size() < pos + sizeof(std::uint64_t) + sizeof(std::uint32_t)) throw IntegrityError("checkpoint is truncated");
  std::size_t crc_pos = in.size() - sizeof(std::uint32_t);
  const auto stored_crc = get<std::uint32_t>(in, crc_pos);
  if (crc_of(in.data(), in.size() - sizeof(std::uint32_t)) != stored_crc)
    throw IntegrityError("checkpoint checksum mismatch in " + path.string());

  const auto header_len = get<std::uint64_t>(in, pos);
  if (pos + header_len > in.size() - sizeof(std::uint32_t)) throw IntegrityError("checkpoint header is truncated");
  json h;
  try {
    h = json::parse(in.substr(pos, header_len));
  } catch (const json::exception&) {
    throw IntegrityError("checkpoint header is not valid JSON");
  }
  pos += header_len;
  const std::size_t blob_begin = pos, blob_end = in.size() - sizeof(std::uint32_t);

  try {
    const NetworkSpec spec = parse_network(h.at("network").dump());
    if (expected_spec && !(*expected_spec == spec))
      throw ConfigError("checkpoint network (" + serialize_network(spec) + ") does not match the configured network (" +
                        serialize_network(*expected_spec) + ")");

    TrainState s;
    s.model = Model<float>(spec);
    if (!h.at("heads").at("expression").get<bool>()) s.model.expr_head.reset();
    if (!h.at("heads").at("identity").get<bool>()) s.model.id_head.reset();
    s.augmentation = parse_augmentation(h.at("augmentation").dump());
    s.stage = stage_from_string(h.at("stage").get<std::string>());
    s.global_step = h.at("global_step").get<std::uint64_t>();
    s.stage_step = h.at("stage_step").get<std::uint64_t>();
    std::istringstream rng(h.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw IntegrityError("checkpoint rng state is malformed");

    for (auto& [name, opt] : s.optimizers.named()) {
      const auto& o = h.at("optimizers").at(name);
      AdamConfig cfg{o.at("learning_rate").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                     o.at("epsilon").get<double>()};
      *opt = Adam<float>(cfg);
      const auto n = o.at("moments").get<std::size_t>();
      std::vector<Tensor> m(n), v(n);
      opt->restore(o.at("steps").get<std::uint64_t>(), std::move(m), std::move(v));
    }

    std::map<std::string, std::pair<Shape, std::size_t>> index;
    for (const auto& t : h.at("tensors"))
      index[t.at("name").get<std::string>()] = {t.at("shape").get<Shape>(), t.at("offset").get<std::size_t>()};
    auto entries = tensor_entries(s);
    if (entries.size() != index.size())
      throw IntegrityError("checkpoint holds " + std::to_string(index.size()) + " tensors, expected " +
                           std::to_string(entries.size()));
    for (auto& e : entries) {
      auto it = index.find(e.name);
      if (it == index.end()) throw IntegrityError("checkpoint lacks tensor " + e.name);
      const auto& [shape, offset] = it->second;
      // Optimizer moments are placeholders until here; adopt the stored shape.
      if (e.tensor->empty() && e.name.rfind("optim/", 0) == 0) *e.tensor = Tensor(shape);
      if (e.tensor->shape() != shape)
        throw IntegrityError("tensor " + e.name + " has shape " + shape_string(shape) + ", expected " +
                             shape_string(e.tensor->shape()));
      const std::size_t begin = blob_begin + offset * sizeof(float), bytes = e.tensor->size() * sizeof(float);
      if (begin + bytes > blob_end) throw IntegrityError("tensor " + e.name + " runs past the end of the checkpoint");
      std::memcpy(e.tensor->ptr(), in.data() + begin, bytes);
    }
    return s;
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is incomplete: ") + e.what());
  }
}

}  // namespace tergan
