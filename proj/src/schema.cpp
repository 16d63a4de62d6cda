#include "personaforge/schema.hpp"

#include "personaforge/errors.hpp"

namespace personaforge {

namespace {

bool matches_type(const json& value, const std::string& type) {
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "string") return value.is_string();
    if (type == "integer") return value.is_number_integer() || value.is_number_unsigned();
    if (type == "number") return value.is_number();
    if (type == "boolean") return value.is_boolean();
    if (type == "null") return value.is_null();
    throw SchemaViolation("schema uses unsupported type '" + type + "'");
}

}  // namespace

void validate_schema(const json& value, const json& schema, const std::string& path) {
    if (schema.contains("type")) {
        const json& t = schema["type"];
        bool ok = false;
        if (t.is_string()) {
            ok = matches_type(value, t.get<std::string>());
        } else {
            for (const auto& option : t)
                if (matches_type(value, option.get<std::string>())) {
                    ok = true;
                    break;
                }
        }
        if (!ok) throw SchemaViolation(path + ": type mismatch (expected " + t.dump() + ")");
    }
    if (schema.contains("enum")) {
        bool ok = false;
        for (const auto& option : schema["enum"])
            if (option == value) {
                ok = true;
                break;
            }
        if (!ok) throw SchemaViolation(path + ": value not in enum " + schema["enum"].dump());
    }
    if (value.is_number()) {
        double v = value.get<double>();
        if (schema.contains("minimum") && v < schema["minimum"].get<double>())
            throw SchemaViolation(path + ": below minimum");
        if (schema.contains("maximum") && v > schema["maximum"].get<double>())
            throw SchemaViolation(path + ": above maximum");
    }
    if (value.is_object()) {
        if (schema.contains("required")) {
            for (const auto& key : schema["required"]) {
                if (!value.contains(key.get<std::string>()))
                    throw SchemaViolation(path + ": missing required field '" +
                                          key.get<std::string>() + "'");
            }
        }
        const json* props = schema.contains("properties") ? &schema["properties"] : nullptr;
        bool allow_extra = true;
        if (schema.contains("additionalProperties") && schema["additionalProperties"].is_boolean())
            allow_extra = schema["additionalProperties"].get<bool>();
        for (const auto& [key, field] : value.items()) {
            if (props && props->contains(key)) {
                validate_schema(field, (*props)[key], path + "." + key);
            } else if (!allow_extra) {
                throw SchemaViolation(path + ": unexpected field '" + key + "'");
            }
        }
    }
    if (value.is_array() && schema.contains("items")) {
        size_t i = 0;
        for (const auto& item : value) {
            validate_schema(item, schema["items"], path + "[" + std::to_string(i) + "]");
            ++i;
        }
    }
}

json load_schema(const std::string& path) { return json::parse(read_file(path)); }

}  // namespace personaforge
