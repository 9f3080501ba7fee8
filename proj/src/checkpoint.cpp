#include "atr/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "atr/error.hpp"
#include "binary_io.hpp"

namespace atr::nn {

namespace {

std::string dims_token(Dims d) {
  return std::to_string(d.channels) + "x" + std::to_string(d.height) + "x" + std::to_string(d.width);
}

int int_field(const std::string& token, const std::string& key, const std::string& what) {
  if (token.rfind(key + "=", 0) != 0) throw IoError(what + ": expected '" + key + "=' in '" + token + "'");
  try {
    return std::stoi(token.substr(key.size() + 1));
  } catch (const std::exception&) {
    throw IoError(what + ": bad number in '" + token + "'");
  }
}

}  // namespace

const CheckpointExtra* Checkpoint::find(const std::string& name) const {
  for (const auto& e : extras)
    if (e.name == name) return &e;
  return nullptr;
}

std::string checkpoint_header(const NetSpec& spec, std::uint64_t seed, std::uint64_t step,
                              const std::vector<CheckpointExtra>& extras) {
  const auto dims = spec.chain();
  std::ostringstream out;
  out << "ATRN 1\n"
      << "input " << spec.input.channels << ' ' << spec.input.height << ' ' << spec.input.width << "\n"
      << "seed " << seed << "\n"
      << "step " << step << "\n"
      << "layers " << spec.layers.size() << "\n";
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    out << "layer " << i << ' ' << to_string(l.kind);
    switch (l.kind) {
      case LayerKind::conv:
        out << " filters=" << l.filters << " kernel=" << l.kernel << " stride=" << l.stride
            << " pad=" << l.pad;
        break;
      case LayerKind::maxpool:
        out << " kernel=" << l.kernel << " stride=" << l.stride;
        break;
      case LayerKind::fully_connected:
        out << " units=" << l.units;
        break;
      default:
        break;
    }
    out << " out=" << dims_token(dims[i]) << "\n";
  }
  out << "extras " << extras.size() << "\n";
  for (const auto& e : extras) {
    if (e.name.empty() || e.name.find_first_of(" \n\t") != std::string::npos)
      throw ValidationError("checkpoint extra name must be a single token");
    out << "extra " << e.name << ' ' << e.values.size() << "\n";
  }
  out << "end\n";
  return out.str();
}

void save_checkpoint(const RegressionNet& net, const std::filesystem::path& path,
                     const std::vector<CheckpointExtra>& extras) {
  const std::string header = checkpoint_header(net.spec(), net.seed(), net.step(), extras);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << header;
  for (const auto& p : net.params()) {
    detail::write_f32_le(out, p.weights);
    detail::write_f32_le(out, p.bias);
  }
  for (const auto& e : extras) detail::write_f32_le(out, e.values);
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string what = path.string();
  NetSpec spec;
  std::uint64_t seed = 0, step = 0;
  std::vector<CheckpointExtra> extras;
  std::size_t declared_layers = 0, declared_extras = 0;
  for (const auto& line : detail::read_header_lines(in, "ATRN", what)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "input") {
      ls >> spec.input.channels >> spec.input.height >> spec.input.width;
    } else if (key == "seed") {
      ls >> seed;
    } else if (key == "step") {
      ls >> step;
    } else if (key == "layers") {
      ls >> declared_layers;
    } else if (key == "layer") {
      std::size_t index;
      std::string kind;
      ls >> index >> kind;
      if (index != spec.layers.size()) throw IoError(what + ": layers out of order");
      LayerSpec l;
      try {
        l.kind = parse_layer_kind(kind);
      } catch (const ValidationError& e) {
        throw IoError(what + ": " + e.what());
      }
      std::string tok;
      switch (l.kind) {
        case LayerKind::conv:
          ls >> tok, l.filters = int_field(tok, "filters", what);
          ls >> tok, l.kernel = int_field(tok, "kernel", what);
          ls >> tok, l.stride = int_field(tok, "stride", what);
          ls >> tok, l.pad = int_field(tok, "pad", what);
          break;
        case LayerKind::maxpool:
          ls >> tok, l.kernel = int_field(tok, "kernel", what);
          ls >> tok, l.stride = int_field(tok, "stride", what);
          break;
        case LayerKind::fully_connected:
          ls >> tok, l.units = int_field(tok, "units", what);
          break;
        default:
          break;
      }
      spec.layers.push_back(l);
    } else if (key == "extras") {
      ls >> declared_extras;
    } else if (key == "extra") {
      CheckpointExtra e;
      std::size_t n = 0;
      ls >> e.name >> n;
      e.values.resize(n);
      extras.push_back(std::move(e));
    } else {
      throw IoError(what + ": unknown header key '" + key + "'");
    }
    if (ls.fail()) throw IoError(what + ": malformed header line '" + line + "'");
  }
  if (declared_layers != spec.layers.size() || declared_extras != extras.size())
    throw IoError(what + ": header counts do not match entries");
  Checkpoint ck{[&] {
                  try {
                    return RegressionNet(spec, seed);
                  } catch (const ValidationError& e) {
                    throw IoError(what + ": " + e.what());
                  }
                }(),
                std::move(extras)};
  ck.net.set_step(step);
  for (auto& p : ck.net.params()) {
    detail::read_f32_le(in, p.weights, what);
    detail::read_f32_le(in, p.bias, what);
  }
  for (auto& e : ck.extras) detail::read_f32_le(in, e.values, what);
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(what + ": trailing bytes after payload");
  return ck;
}

}  // namespace atr::nn
