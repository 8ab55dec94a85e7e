//! Starts the game server in-process on a free port, then plays one round
//! over the `/play` WebSocket as a scripted client.
//!
//! `cargo run --release -p sketchnet-server --example websocket_round`
//!
//! For a long-running server use the CLI:
//! `sketchnet serve --bundle bundle.json --classes classes.txt --static-dir ui/`

use std::sync::Arc;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use sketchnet::experiment::encode_all;
use sketchnet::game::RoundConfig;
use sketchnet::{doodles, split_dataset, train, ArchitectureSpec, ModelState, TrainConfig};
use sketchnet_server::protocol::ServerMessage;
use sketchnet_server::server::{router, AppState};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let classes = doodles::default_class_table();
    let split = split_dataset(&doodles::generate(&classes, 60, 9)?, 0.1, 0.1, 9)?;
    let config = TrainConfig {
        batch_size: 8,
        max_epochs: 15,
        seed: 9,
        ..TrainConfig::default()
    };
    let initial = ModelState::build(&ArchitectureSpec::desk_scale(classes.len()), 9)?;
    let (model, _) = train(&initial, &encode_all(&split.train)?, &encode_all(&split.validation)?, &config)?;

    // a short cadence keeps the demo quick
    let round = RoundConfig {
        cadence: Duration::from_millis(500),
        ..RoundConfig::default()
    };
    let state = AppState::new(Arc::new(model), Arc::new(classes.clone()), round, 9);
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(async move { axum::serve(listener, router(state, None)).await });

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/play")).await?;
    ws.send(Message::text(r#"{"type":"start_round","mode":"sketcher"}"#)).await?;
    let mut code_word = None;
    while let Some(frame) = ws.next().await {
        let Message::Text(text) = frame? else { continue };
        println!("<- {text}");
        match serde_json::from_str::<ServerMessage>(text.as_str())? {
            ServerMessage::RoundStarted { code_word_plain, .. } => {
                let word = code_word_plain.expect("sketcher mode reveals the word");
                let class = classes.index_of(&word)?;
                let sketch = split.test.iter().find(|s| s.label == Some(class)).expect("test sketch of the class");
                for stroke in &sketch.strokes {
                    let points: Vec<[f64; 2]> = stroke.points().iter().map(|p| [p.x, p.y]).collect();
                    let msg = serde_json::json!({ "type": "stroke", "points": points }).to_string();
                    ws.send(Message::text(msg)).await?;
                    tokio::time::sleep(Duration::from_millis(300)).await;
                }
                code_word = Some(word);
            }
            ServerMessage::RoundOver { .. } => break,
            _ => {}
        }
    }
    println!("code word was {}", code_word.unwrap_or_default());
    Ok(())
}
