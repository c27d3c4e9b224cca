//! CRUD for profiles, peers, places and people.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use panelwise_core::store::{Collection, Store, StoreError};
use panelwise_core::{AdolescentProfile, PeerProfile, PersonEntry, PlaceEntry};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{blocking, ApiError, AppState};

trait Record: Serialize + DeserializeOwned + Send + 'static {
    const COLLECTION: Collection;
    fn id(&self) -> &str;
    /// Profile the record belongs to, for per-profile registries.
    fn owner(&self) -> Option<&str> {
        None
    }
    fn get(store: &Store, id: &str) -> Result<Self, StoreError>;
    fn list(store: &Store, profile_id: Option<&str>) -> Result<Vec<Self>, StoreError>;
    fn put(store: &Store, value: &Self) -> Result<(), StoreError>;
}

impl Record for AdolescentProfile {
    const COLLECTION: Collection = Collection::Profiles;
    fn id(&self) -> &str {
        &self.id
    }
    fn get(store: &Store, id: &str) -> Result<Self, StoreError> {
        store.profile(id)
    }
    fn list(store: &Store, _: Option<&str>) -> Result<Vec<Self>, StoreError> {
        store.profiles()
    }
    fn put(store: &Store, value: &Self) -> Result<(), StoreError> {
        store.put_profile(value)
    }
}

impl Record for PeerProfile {
    const COLLECTION: Collection = Collection::Peers;
    fn id(&self) -> &str {
        &self.id
    }
    fn get(store: &Store, id: &str) -> Result<Self, StoreError> {
        store.peer(id)
    }
    fn list(store: &Store, _: Option<&str>) -> Result<Vec<Self>, StoreError> {
        store.peers()
    }
    fn put(store: &Store, value: &Self) -> Result<(), StoreError> {
        store.put_peer(value)
    }
}

impl Record for PlaceEntry {
    const COLLECTION: Collection = Collection::Places;
    fn id(&self) -> &str {
        &self.id
    }
    fn owner(&self) -> Option<&str> {
        Some(&self.profile_id)
    }
    fn get(store: &Store, id: &str) -> Result<Self, StoreError> {
        store.place(id)
    }
    fn list(store: &Store, profile_id: Option<&str>) -> Result<Vec<Self>, StoreError> {
        store.places(profile_id)
    }
    fn put(store: &Store, value: &Self) -> Result<(), StoreError> {
        store.put_place(value)
    }
}

impl Record for PersonEntry {
    const COLLECTION: Collection = Collection::People;
    fn id(&self) -> &str {
        &self.id
    }
    fn owner(&self) -> Option<&str> {
        Some(&self.profile_id)
    }
    fn get(store: &Store, id: &str) -> Result<Self, StoreError> {
        store.person(id)
    }
    fn list(store: &Store, profile_id: Option<&str>) -> Result<Vec<Self>, StoreError> {
        store.people(profile_id)
    }
    fn put(store: &Store, value: &Self) -> Result<(), StoreError> {
        store.put_person(value)
    }
}

#[derive(Deserialize)]
struct Filter {
    profile_id: Option<String>,
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("malformed body: {e}")))
}

fn check_owner<T: Record>(store: &Store, value: &T) -> Result<(), ApiError> {
    if let Some(owner) = value.owner() {
        match store.profile(owner) {
            Ok(_) => {}
            Err(StoreError::NotFound { .. }) => {
                return Err(ApiError::unprocessable(format!("unknown profile `{owner}`")));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

async fn list<T: Record>(State(state): State<Arc<AppState>>, Query(f): Query<Filter>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let items = blocking(move || Ok(T::list(engine.store(), f.profile_id.as_deref())?)).await?;
    Ok(Json(items).into_response())
}

async fn create<T: Record>(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let value: T = parse(&body)?;
    let engine = state.engine.clone();
    let value = blocking(move || {
        let store = engine.store();
        match T::get(store, value.id()) {
            Ok(_) => {
                return Err(StoreError::Duplicate {
                    collection: T::COLLECTION,
                    id: value.id().to_string(),
                }
                .into())
            }
            Err(StoreError::NotFound { .. }) => {}
            Err(e) => return Err(e.into()),
        }
        check_owner(store, &value)?;
        T::put(store, &value)?;
        Ok(value)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(value)).into_response())
}

async fn show<T: Record>(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    let value = blocking(move || Ok(T::get(engine.store(), &id)?)).await?;
    Ok(Json(value).into_response())
}

async fn replace<T: Record>(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let value: T = parse(&body)?;
    if value.id() != id {
        return Err(ApiError::unprocessable(format!(
            "body id `{}` does not match path id `{id}`",
            value.id()
        )));
    }
    let engine = state.engine.clone();
    let value = blocking(move || {
        check_owner(engine.store(), &value)?;
        T::put(engine.store(), &value)?;
        Ok(value)
    })
    .await?;
    Ok(Json(value).into_response())
}

async fn remove<T: Record>(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let engine = state.engine.clone();
    blocking(move || Ok(engine.store().delete(T::COLLECTION, &id)?)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

fn crud<T: Record>(base: &str) -> Router<Arc<AppState>> {
    Router::new()
        .route(base, get(list::<T>).post(create::<T>))
        .route(
            &format!("{base}/{{id}}"),
            get(show::<T>).put(replace::<T>).delete(remove::<T>),
        )
}

pub fn routes() -> Router<Arc<AppState>> {
    crud::<AdolescentProfile>("/profiles")
        .merge(crud::<PeerProfile>("/peers"))
        .merge(crud::<PlaceEntry>("/places"))
        .merge(crud::<PersonEntry>("/people"))
}
