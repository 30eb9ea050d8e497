#pragma once

#include <algorithm>
#include <istream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

namespace zeval::cli {

/// Reads option defaults from a JSON object. Scalar keys at the top level
/// apply to every subcommand; an object keyed by a subcommand name applies to
/// that subcommand only and takes precedence. Keys may use '-' or '_'.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(std::vector<std::string> subcommands) : subcommands_(std::move(subcommands)) {}

    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        nlohmann::json j = nlohmann::json::object();
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
            const auto& name = opt->get_lnames().front();
            if (opt->count() > 0) {
                j[name] = opt->results().size() == 1 ? nlohmann::json(opt->results().front())
                                                      : nlohmann::json(opt->results());
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        const auto j = nlohmann::json::parse(input, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw CLI::ConversionError("--config", "config file must hold a JSON object");
        }
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            if (!value.is_object()) continue;
            for (const auto& [name, leaf] : value.items()) items.push_back(item({key}, name, leaf));
        }
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) continue;
            items.push_back(item({}, key, value));
            for (const auto& sub : subcommands_) items.push_back(item({sub}, key, value));
        }
        return items;
    }

private:
    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_null()) return "";
        return v.dump();
    }

    static CLI::ConfigItem item(std::vector<std::string> parents, std::string name, const nlohmann::json& value) {
        std::replace(name.begin(), name.end(), '_', '-');
        CLI::ConfigItem out;
        out.parents = std::move(parents);
        out.name = std::move(name);
        if (value.is_array()) {
            for (const auto& v : value) out.inputs.push_back(scalar(v));
        } else {
            out.inputs.push_back(scalar(value));
        }
        return out;
    }

    std::vector<std::string> subcommands_;
};

}  // namespace zeval::cli
