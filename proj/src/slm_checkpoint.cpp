#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "docslm/slm.hpp"

namespace docslm::slm {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'S', 'L', 'M', 'C', 'K', 'P', 'T'};

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw std::runtime_error(path.string() + ": truncated checkpoint data");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Parameters& p, const nlohmann::json& tokenizer,
                     const nlohmann::json& metadata, const OptimizerState* optimizer) {
  nlohmann::json header;
  header["format"] = "docslm-checkpoint";
  header["version"] = 1;
  header["dtype"] = "float64";
  header["config"] = p.config().to_json();
  header["tokenizer"] = tokenizer;
  header["metadata"] = metadata;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : p.layout().tensors) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  header["tensors"] = std::move(tensors);
  if (optimizer != nullptr) {
    nlohmann::json o{{"rule", to_string(optimizer->rule)}, {"step", optimizer->step}, {"size", p.size()}};
    std::size_t at = p.size();
    if (!optimizer->m.empty()) {
      o["m_offset"] = at;
      at += optimizer->m.size();
    }
    if (!optimizer->v.empty()) o["v_offset"] = at;
    header["optimizer"] = std::move(o);
  }

  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_doubles(out, p.values());
  if (optimizer != nullptr) {
    write_doubles(out, optimizer->m);
    write_doubles(out, optimizer->v);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error(path.string() + ": not a docslm checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (std::uint64_t{1} << 32)) throw std::runtime_error(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error(path.string() + ": truncated header");
  const auto header = nlohmann::json::parse(text);

  Checkpoint ck{Parameters(ModelConfig::from_json(header.at("config"))), header.value("tokenizer", nlohmann::json()),
                header.value("metadata", nlohmann::json::object()), std::nullopt};
  const auto& tensors = header.at("tensors");
  if (tensors.size() != ck.params.layout().tensors.size()) {
    throw std::runtime_error(path.string() + ": tensor table does not match the config");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = ck.params.layout().tensors[i];
    if (tensors[i].at("name").get<std::string>() != t.name ||
        tensors[i].at("offset").get<std::size_t>() != t.offset ||
        tensors[i].at("shape").get<std::vector<int>>() != t.shape) {
      throw std::runtime_error(path.string() + ": unexpected tensor entry " + tensors[i].dump());
    }
  }
  read_doubles(in, ck.params.values(), path);

  if (header.contains("optimizer")) {
    const auto& o = header["optimizer"];
    OptimizerState st;
    st.rule = parse_optimizer_rule(o.at("rule").get<std::string>());
    st.step = o.at("step").get<std::int64_t>();
    if (o.contains("m_offset")) {
      st.m.resize(ck.params.size());
      read_doubles(in, st.m, path);
    }
    if (o.contains("v_offset")) {
      st.v.resize(ck.params.size());
      read_doubles(in, st.v, path);
    }
    ck.optimizer = std::move(st);
  }
  return ck;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses, int first_step) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g\n", first_step + static_cast<int>(i), losses[i]);
    out << buf;
  }
}

}  // namespace docslm::slm
